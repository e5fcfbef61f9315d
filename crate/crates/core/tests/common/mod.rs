#![allow(dead_code)]

use dpgcn::features::FeatureMatrix;
use dpgcn::graph::SparseGraph;
use dpgcn::model::{self, GcnParams};
use dpgcn::partition::{mask_subgraph, random_partition};
use dpgcn::rng::SeededRng;
use ndarray::Array2;

/// Erdős–Rényi graph on `n` nodes.
pub fn random_graph(n: usize, p: f64, rng: &mut SeededRng) -> SparseGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.bernoulli(p) {
                edges.push((i, j));
            }
        }
    }
    SparseGraph::from_edges(n, &edges).unwrap()
}

pub fn gaussian_features(n: usize, d: usize, rng: &mut SeededRng) -> FeatureMatrix {
    FeatureMatrix::new(Array2::from_shape_simple_fn((n, d), || rng.standard_normal())).unwrap()
}

/// `D^{-1/2}(A+I)D^{-1/2}` computed densely from the edge list.
pub fn dense_normalized(graph: &SparseGraph) -> Array2<f64> {
    let n = graph.num_nodes();
    let mut a = Array2::<f64>::eye(n);
    for (i, j) in graph.edge_list() {
        a[[i, j]] = 1.0;
        a[[j, i]] = 1.0;
    }
    let deg: Vec<f64> = a.rows().into_iter().map(|r| r.sum()).collect();
    Array2::from_shape_fn((n, n), |(i, j)| a[[i, j]] / (deg[i] * deg[j]).sqrt())
}

/// Maximum relative deviation between the analytic gradient and central
/// finite differences, with a floor on the denominator for near-zero entries.
pub fn gradient_check(seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    loop {
        let n = 2 + rng.below(7);
        let graph = random_graph(n, 0.4, &mut rng);
        let (d, f, k) = (1 + rng.below(4), 1 + rng.below(5), 2 + rng.below(3));
        let x = gaussian_features(n, d, &mut rng);
        let params = model::init_params(d, f, k, &mut rng).unwrap();
        let labels: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
        let mask: Vec<usize> = (0..n).filter(|_| rng.bernoulli(0.7)).collect();
        if mask.is_empty() {
            continue;
        }
        let adj = graph.normalize();
        let trace = model::forward(&params, &adj, &x, 0.0, false, &mut rng).unwrap();
        // Central differences are meaningless at a ReLU kink.
        if trace.z0.iter().any(|z| z.abs() < 1e-3) {
            continue;
        }
        let grad = model::backward(&trace, &params, &adj, &x, &labels, &mask).unwrap();

        let loss = |p: &GcnParams| {
            let t = model::forward(p, &adj, &x, 0.0, false, &mut SeededRng::new(0)).unwrap();
            model::masked_cross_entropy(&t.z1, &labels, &mask).unwrap()
        };
        let h = 1e-4;
        let mut worst: f64 = 0.0;
        for i in 0..params.len() {
            let mut plus = params.clone();
            plus.as_mut_slice()[i] += h;
            let mut minus = params.clone();
            minus.as_mut_slice()[i] -= h;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let analytic = grad.as_slice()[i];
            let scale = analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic - numeric).abs() / scale);
        }
        return worst;
    }
}

/// Checks disjointness, coverage, balance and masking for one partition of
/// `train` over `graph`.
pub fn check_partition(graph: &SparseGraph, train: &[usize], s: usize, seed: u64) {
    let n = graph.num_nodes();
    let mut rng = SeededRng::new(seed);
    let features = gaussian_features(n, 2, &mut rng);
    let labels: Vec<usize> = (0..n).map(|v| v % 3).collect();
    let partition = random_partition(train, s, &mut rng).unwrap();

    let sizes = partition.sizes();
    assert_eq!(sizes.len(), s);
    assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    let mut all: Vec<usize> = (0..s).flat_map(|k| partition.members(k).to_vec()).collect();
    all.sort_unstable();
    let mut expected = train.to_vec();
    expected.sort_unstable();
    assert_eq!(all, expected, "partition must cover the training nodes exactly once");

    let mut kept = 0;
    for k in 0..s {
        let sub = mask_subgraph(graph, &features, &labels, &partition, k).unwrap();
        assert_eq!(sub.global_ids, partition.members(k));
        for (i, j) in sub.graph.edge_list() {
            let (gi, gj) = (sub.to_global(i), sub.to_global(j));
            assert!(graph.has_edge(gi, gj));
            assert_eq!(partition.subgraph_of(gi), Some(k));
            assert_eq!(partition.subgraph_of(gj), Some(k));
        }
        for (local, &global) in sub.global_ids.iter().enumerate() {
            assert_eq!(sub.labels[local], labels[global]);
            assert_eq!(sub.features.view().row(local), features.view().row(global));
        }
        kept += sub.graph.num_edges();
    }
    // Every intra-subgraph edge survives.
    let intra = graph
        .edge_list()
        .into_iter()
        .filter(|&(i, j)| partition.subgraph_of(i).is_some() && partition.subgraph_of(i) == partition.subgraph_of(j))
        .count();
    assert_eq!(kept, intra);
}
