//! Random splitting of the training nodes into disjoint subgraphs.
//!
//! The split never looks at graph structure: node order is a uniform random
//! permutation, so the split itself reveals nothing about any individual.

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::graph::SparseGraph;
use crate::rng::SeededRng;

/// Assignment of each training node to exactly one of `s` subgraphs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    num_subgraphs: usize,
    /// Members of each subgraph, ascending by global node index.
    members: Vec<Vec<usize>>,
}

impl Partition {
    pub fn num_subgraphs(&self) -> usize {
        self.num_subgraphs
    }

    pub fn members(&self, k: usize) -> &[usize] {
        &self.members[k]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    pub fn num_nodes(&self) -> usize {
        self.members.iter().map(Vec::len).sum()
    }

    /// Subgraph index of `node`, or `None` if it is not a training node.
    pub fn subgraph_of(&self, node: usize) -> Option<usize> {
        self.members
            .iter()
            .position(|m| m.binary_search(&node).is_ok())
    }

    /// `(node, subgraph)` pairs sorted by node.
    pub fn assignment(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = self
            .members
            .iter()
            .enumerate()
            .flat_map(|(k, m)| m.iter().map(move |&v| (v, k)))
            .collect();
        out.sort_unstable();
        out
    }
}

/// Shuffles `training_nodes` and cuts the permutation into `s` contiguous
/// chunks. When `n mod s = r ≠ 0` the first `r` chunks get `⌈n/s⌉` nodes and
/// the rest `⌊n/s⌋`.
pub fn random_partition(training_nodes: &[usize], s: usize, rng: &mut SeededRng) -> Result<Partition> {
    let n = training_nodes.len();
    if s == 0 {
        return Err(Error::invalid("number of subgraphs must be at least 1"));
    }
    if s > n {
        return Err(Error::invalid(format!(
            "cannot split {n} training nodes into {s} subgraphs"
        )));
    }
    let mut order = training_nodes.to_vec();
    {
        let mut seen = order.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("training nodes contain duplicates"));
        }
    }
    rng.shuffle(&mut order);

    let base = n / s;
    let extra = n % s;
    let mut members = Vec::with_capacity(s);
    let mut start = 0;
    for k in 0..s {
        let len = base + usize::from(k < extra);
        let mut chunk = order[start..start + len].to_vec();
        chunk.sort_unstable();
        members.push(chunk);
        start += len;
    }
    Ok(Partition {
        num_subgraphs: s,
        members,
    })
}

/// Induced subgraph on one partition block, relabeled to `0..len`.
#[derive(Debug, Clone)]
pub struct Subgraph {
    pub graph: SparseGraph,
    pub features: FeatureMatrix,
    pub labels: Vec<usize>,
    /// `global_ids[local] = global`.
    pub global_ids: Vec<usize>,
}

impl Subgraph {
    pub fn to_global(&self, local: usize) -> usize {
        self.global_ids[local]
    }
}

/// Restricts graph, features and labels to subgraph `k`. Edges with an
/// endpoint outside the block are dropped.
pub fn mask_subgraph(
    graph: &SparseGraph,
    features: &FeatureMatrix,
    labels: &[usize],
    partition: &Partition,
    k: usize,
) -> Result<Subgraph> {
    if k >= partition.num_subgraphs() {
        return Err(Error::IndexOutOfRange {
            what: "subgraphs",
            index: k,
            bound: partition.num_subgraphs(),
        });
    }
    if features.num_rows() != graph.num_nodes() || labels.len() != graph.num_nodes() {
        return Err(Error::shape("graph, features and labels disagree on node count"));
    }
    let global_ids = partition.members(k).to_vec();
    let mut local_of = vec![usize::MAX; graph.num_nodes()];
    for (local, &global) in global_ids.iter().enumerate() {
        if global >= graph.num_nodes() {
            return Err(Error::IndexOutOfRange {
                what: "nodes",
                index: global,
                bound: graph.num_nodes(),
            });
        }
        local_of[global] = local;
    }
    let mut edges = Vec::new();
    for (local, &global) in global_ids.iter().enumerate() {
        for &nb in graph.neighbors(global) {
            let other = local_of[nb];
            if other != usize::MAX && local < other {
                edges.push((local, other));
            }
        }
    }
    Ok(Subgraph {
        graph: SparseGraph::from_edges(global_ids.len(), &edges)?,
        features: features.select_rows(&global_ids)?,
        labels: global_ids.iter().map(|&g| labels[g]).collect(),
        global_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn sorted_sizes(p: &Partition) -> Vec<usize> {
        let mut s = p.sizes();
        s.sort_unstable_by(|a, b| b.cmp(a));
        s
    }

    #[test]
    fn uneven_split_sizes() {
        let nodes: Vec<usize> = (0..10).collect();
        let p = random_partition(&nodes, 3, &mut SeededRng::new(0)).unwrap();
        assert_eq!(sorted_sizes(&p), vec![4, 3, 3]);
    }

    #[test]
    fn even_split_sizes() {
        let nodes: Vec<usize> = (0..9).collect();
        let p = random_partition(&nodes, 3, &mut SeededRng::new(0)).unwrap();
        assert_eq!(sorted_sizes(&p), vec![3, 3, 3]);
    }

    #[test]
    fn singletons() {
        let nodes: Vec<usize> = (0..5).collect();
        let p = random_partition(&nodes, 5, &mut SeededRng::new(0)).unwrap();
        assert_eq!(p.sizes(), vec![1; 5]);
    }

    #[test]
    fn invalid_split_counts() {
        let nodes: Vec<usize> = (0..5).collect();
        assert!(random_partition(&nodes, 0, &mut SeededRng::new(0)).is_err());
        assert!(random_partition(&nodes, 6, &mut SeededRng::new(0)).is_err());
    }

    fn triangle() -> (SparseGraph, FeatureMatrix, Vec<usize>) {
        let g = SparseGraph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let x = FeatureMatrix::new(Array2::from_shape_fn((3, 2), |(i, j)| (i * 2 + j) as f64)).unwrap();
        (g, x, vec![0, 1, 2])
    }

    #[test]
    fn triangle_keeps_internal_edge_only() {
        let (g, x, y) = triangle();
        let p = Partition {
            num_subgraphs: 2,
            members: vec![vec![0, 1], vec![2]],
        };
        let sub = mask_subgraph(&g, &x, &y, &p, 0).unwrap();
        assert_eq!(sub.graph.edge_list(), vec![(0, 1)]);
        assert_eq!(sub.labels, vec![0, 1]);
        assert_eq!(sub.features.view().row(1).to_vec(), vec![2.0, 3.0]);

        let single = mask_subgraph(&g, &x, &y, &p, 1).unwrap();
        assert_eq!(single.graph.num_nodes(), 1);
        assert_eq!(single.graph.num_edges(), 0);
        assert_eq!(single.to_global(0), 2);
    }

    #[test]
    fn whole_block_preserves_edges() {
        let (g, x, y) = triangle();
        let p = Partition {
            num_subgraphs: 1,
            members: vec![vec![0, 1, 2]],
        };
        let sub = mask_subgraph(&g, &x, &y, &p, 0).unwrap();
        assert_eq!(sub.graph, g);
    }

    #[test]
    fn invalid_block_index() {
        let (g, x, y) = triangle();
        let p = random_partition(&[0, 1, 2], 2, &mut SeededRng::new(1)).unwrap();
        assert!(matches!(
            mask_subgraph(&g, &x, &y, &p, 2),
            Err(Error::IndexOutOfRange { .. })
        ));
    }
}
