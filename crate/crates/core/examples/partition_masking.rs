//! Random graph splitting: the training nodes are cut into disjoint
//! subgraphs and every edge between different subgraphs is removed, so each
//! subgraph can serve as one independent example.

use dpgcn::graph::SparseGraph;
use dpgcn::partition::{mask_subgraph, random_partition};
use dpgcn::rng::{SeededRng, Stream};
use dpgcn::features::FeatureMatrix;
use ndarray::Array2;

fn main() -> dpgcn::Result<()> {
    // A 4x3 grid graph.
    let (rows, cols) = (4, 3);
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let v = r * cols + c;
            if c + 1 < cols {
                edges.push((v, v + 1));
            }
            if r + 1 < rows {
                edges.push((v, v + cols));
            }
        }
    }
    let n = rows * cols;
    let graph = SparseGraph::from_edges(n, &edges)?;
    println!("grid: {} nodes, {} edges", graph.num_nodes(), graph.num_edges());

    let adj = graph.normalize();
    println!("normalized propagation matrix has {} stored entries", adj.nnz());
    println!("  corner weight A[0,0] = {:.4}, A[0,1] = {:.4}", adj.get(0, 0), adj.get(0, 1));

    let features = FeatureMatrix::new(Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64))?;
    let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();

    // Only the first ten nodes are training nodes.
    let train: Vec<usize> = (0..10).collect();
    let mut rng = SeededRng::stream(42, Stream::Partition);
    let partition = random_partition(&train, 3, &mut rng)?;
    println!("partition sizes {:?}", partition.sizes());

    let mut kept = 0;
    for k in 0..partition.num_subgraphs() {
        let sub = mask_subgraph(&graph, &features, &labels, &partition, k)?;
        kept += sub.graph.num_edges();
        let global: Vec<(usize, usize)> = sub
            .graph
            .edge_list()
            .into_iter()
            .map(|(i, j)| (sub.to_global(i), sub.to_global(j)))
            .collect();
        println!("  subgraph {k}: nodes {:?}, edges {:?}", sub.global_ids, global);
    }
    println!("{kept} of {} edges survive masking", graph.num_edges());
    Ok(())
}
