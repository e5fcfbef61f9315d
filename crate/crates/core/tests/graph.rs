mod common;

use approx::assert_abs_diff_eq;
use common::{dense_normalized, gaussian_features, random_graph};
use dpgcn::graph::{spmm, SparseGraph};
use dpgcn::model;
use dpgcn::rng::SeededRng;
use dpgcn::features::FeatureMatrix;
use ndarray::Array2;
use proptest::prelude::*;

fn edges_strategy() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (1usize..20).prop_flat_map(|n| (Just(n), prop::collection::vec((0..n, 0..n), 0..60)))
}

proptest! {
    #[test]
    fn normalization_matches_dense_oracle((n, edges) in edges_strategy()) {
        let graph = SparseGraph::from_edges(n, &edges).unwrap();
        let sparse = graph.normalize().to_dense();
        let dense = dense_normalized(&graph);
        for (a, b) in sparse.iter().zip(dense.iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        // Symmetric, positive diagonal, entries in (0, 1].
        for i in 0..n {
            prop_assert!(sparse[[i, i]] > 0.0);
            for j in 0..n {
                prop_assert_eq!(sparse[[i, j]], sparse[[j, i]]);
                prop_assert!(sparse[[i, j]] <= 1.0);
            }
        }
    }

    #[test]
    fn edge_set_is_symmetric_closure((n, edges) in edges_strategy()) {
        let graph = SparseGraph::from_edges(n, &edges).unwrap();
        for &(i, j) in &edges {
            prop_assert_eq!(graph.has_edge(i, j), i != j);
            prop_assert_eq!(graph.has_edge(j, i), i != j);
        }
        let total: usize = (0..n).map(|v| graph.degree(v)).sum();
        prop_assert_eq!(total, 2 * graph.num_edges());
        prop_assert_eq!(graph.edge_list().len(), graph.num_edges());
    }

    #[test]
    fn spmm_matches_dense_product((n, edges) in edges_strategy(), cols in 1usize..5, seed in any::<u64>()) {
        let graph = SparseGraph::from_edges(n, &edges).unwrap();
        let mut rng = SeededRng::new(seed);
        let x = Array2::from_shape_simple_fn((n, cols), || rng.standard_normal());
        let adj = graph.normalize();
        let sparse = spmm(&adj, &x).unwrap();
        let dense = adj.to_dense().dot(&x);
        for (a, b) in sparse.iter().zip(dense.iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_is_permutation_equivariant(seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let n = 9;
        let graph = random_graph(n, 0.35, &mut rng);
        let x = gaussian_features(n, 4, &mut rng);
        let params = model::init_params(4, 6, 3, &mut rng).unwrap();

        let mut perm: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut perm);
        // Node v of the original graph becomes node perm[v].
        let edges: Vec<(usize, usize)> = graph.edge_list().into_iter().map(|(i, j)| (perm[i], perm[j])).collect();
        let permuted = SparseGraph::from_edges(n, &edges).unwrap();
        let mut px = Array2::zeros((n, 4));
        for v in 0..n {
            px.row_mut(perm[v]).assign(&x.view().row(v));
        }
        let px = FeatureMatrix::new(px).unwrap();

        let a = model::forward(&params, &graph.normalize(), &x, 0.0, false, &mut rng).unwrap();
        let b = model::forward(&params, &permuted.normalize(), &px, 0.0, false, &mut rng).unwrap();
        for v in 0..n {
            for c in 0..3 {
                prop_assert!((a.z1[[v, c]] - b.z1[[perm[v], c]]).abs() < 1e-10);
            }
        }
        let labels: Vec<usize> = (0..n).map(|v| v % 3).collect();
        let mut permuted_labels = vec![0; n];
        for v in 0..n {
            permuted_labels[perm[v]] = labels[v];
        }
        let mask: Vec<usize> = (0..n).collect();
        let la = model::masked_cross_entropy(&a.z1, &labels, &mask).unwrap();
        let lb = model::masked_cross_entropy(&b.z1, &permuted_labels, &mask).unwrap();
        prop_assert!((la - lb).abs() < 1e-10);
        let fa = model::evaluate(&params, &graph.normalize(), &x, &labels, &mask).unwrap().micro_f1;
        let fb = model::evaluate(&params, &permuted.normalize(), &px, &permuted_labels, &mask).unwrap().micro_f1;
        prop_assert_eq!(fa, fb);
    }
}

#[test]
fn spmm_rejects_mismatched_rows() {
    let graph = SparseGraph::from_edges(3, &[(0, 1)]).unwrap();
    assert!(spmm(&graph.normalize(), &Array2::zeros((4, 2))).is_err());
}

#[test]
fn isolated_nodes_keep_unit_diagonal() {
    let graph = SparseGraph::from_edges(4, &[(0, 1)]).unwrap();
    let adj = graph.normalize();
    assert_abs_diff_eq!(adj.get(2, 2), 1.0);
    assert_abs_diff_eq!(adj.get(0, 1), 0.5);
}
