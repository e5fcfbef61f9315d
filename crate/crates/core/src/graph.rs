//! Sparse undirected graphs and the symmetric-normalized propagation matrix.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Undirected simple graph in compressed sparse row form.
///
/// Both directions of every edge are stored, column indices are sorted
/// within each row, and no self-loops or duplicates are kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseGraph {
    num_nodes: usize,
    row_offsets: Vec<usize>,
    columns: Vec<usize>,
}

impl SparseGraph {
    /// Builds the symmetric closure of `edges`. Self-loops are dropped
    /// (the propagation matrix adds its own) and duplicates collapse.
    pub fn from_edges(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
        for &(i, j) in edges {
            for v in [i, j] {
                if v >= num_nodes {
                    return Err(Error::IndexOutOfRange {
                        what: "nodes",
                        index: v,
                        bound: num_nodes,
                    });
                }
            }
            if i == j {
                continue;
            }
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        let mut row_offsets = Vec::with_capacity(num_nodes + 1);
        let mut columns = Vec::new();
        row_offsets.push(0);
        for mut row in adjacency {
            row.sort_unstable();
            row.dedup();
            columns.extend_from_slice(&row);
            row_offsets.push(columns.len());
        }
        Ok(Self {
            num_nodes,
            row_offsets,
            columns,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of stored directed entries, i.e. twice the undirected edge count.
    pub fn num_entries(&self) -> usize {
        self.columns.len()
    }

    pub fn num_edges(&self) -> usize {
        self.columns.len() / 2
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.columns[self.row_offsets[node]..self.row_offsets[node + 1]]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.row_offsets[node + 1] - self.row_offsets[node]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i < self.num_nodes && self.neighbors(i).binary_search(&j).is_ok()
    }

    /// Undirected edges as `(i, j)` with `i < j`, sorted.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        (0..self.num_nodes)
            .flat_map(|i| {
                self.neighbors(i)
                    .iter()
                    .filter(move |&&j| i < j)
                    .map(move |&j| (i, j))
            })
            .collect()
    }

    pub fn normalize(&self) -> NormalizedAdjacency {
        normalize_adjacency(self)
    }
}

/// `D̂^{-1/2} (A + I) D̂^{-1/2}` stored in CSR form, diagonal included.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    num_nodes: usize,
    row_offsets: Vec<usize>,
    columns: Vec<usize>,
    values: Vec<f64>,
}

/// Adds self-loops and applies symmetric degree normalization.
///
/// `d̂` counts the self-loop, so isolated nodes get `d̂ = 1` and a unit
/// diagonal entry.
pub fn normalize_adjacency(graph: &SparseGraph) -> NormalizedAdjacency {
    let n = graph.num_nodes();
    let degree: Vec<f64> = (0..n).map(|i| (graph.degree(i) + 1) as f64).collect();

    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut columns = Vec::with_capacity(graph.num_entries() + n);
    let mut values = Vec::with_capacity(graph.num_entries() + n);
    row_offsets.push(0);
    for i in 0..n {
        let neighbors = graph.neighbors(i);
        let split = neighbors.partition_point(|&j| j < i);
        let row = neighbors[..split]
            .iter()
            .chain(std::iter::once(&i))
            .chain(&neighbors[split..]);
        for &j in row {
            columns.push(j);
            // d̂ᵢ·d̂ⱼ commutes exactly, so the matrix is symmetric bit for bit.
            values.push(1.0 / (degree[i] * degree[j]).sqrt());
        }
        row_offsets.push(columns.len());
    }
    NormalizedAdjacency {
        num_nodes: n,
        row_offsets,
        columns,
        values,
    }
}

impl NormalizedAdjacency {
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(column, value)` pairs of one row in ascending column order.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_offsets[i]..self.row_offsets[i + 1];
        self.columns[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_offsets[i]..self.row_offsets[i + 1];
        match self.columns[range.clone()].binary_search(&j) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.num_nodes, self.num_nodes));
        for i in 0..self.num_nodes {
            for (j, v) in self.row(i) {
                out[[i, j]] = v;
            }
        }
        out
    }

    pub fn spmm(&self, dense: &Array2<f64>) -> Result<Array2<f64>> {
        spmm(self, dense)
    }
}

/// Sparse–dense product `adj · dense`.
///
/// Each output row accumulates its terms in ascending column order, so the
/// result is bitwise deterministic.
pub fn spmm(adj: &NormalizedAdjacency, dense: &Array2<f64>) -> Result<Array2<f64>> {
    if dense.nrows() != adj.num_nodes {
        return Err(Error::shape(format!(
            "spmm: adjacency has {} nodes, dense matrix has {} rows",
            adj.num_nodes,
            dense.nrows()
        )));
    }
    let cols = dense.ncols();
    let dense = dense.as_standard_layout();
    let src = dense.as_slice().expect("standard layout");
    let mut out = vec![0.0; adj.num_nodes * cols];
    for (i, out_row) in out.chunks_exact_mut(cols.max(1)).enumerate().take(adj.num_nodes) {
        for (j, w) in adj.row(i) {
            let src_row = &src[j * cols..(j + 1) * cols];
            for (o, &s) in out_row.iter_mut().zip(src_row) {
                *o += w * s;
            }
        }
    }
    Ok(Array2::from_shape_vec((adj.num_nodes, cols), out).expect("shape"))
}
