//! Shared fixtures for the criterion benchmarks under `benches/`.

use graphcast::autodiff::{RngStream, Tensor};
use graphcast::graph::{er_random_graph, AdjacencyMatrix};

/// Tensor of uniform draws in `[-1, 1)`.
pub fn uniform(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = RngStream::new(seed);
    let data = (0..shape.iter().product()).map(|_| 2.0 * rng.open01() - 1.0).collect();
    Tensor::new(shape.to_vec(), data).expect("sized")
}

pub fn random_graph(n: usize, seed: u64) -> AdjacencyMatrix {
    er_random_graph(n, &mut RngStream::new(seed)).expect("n >= 2")
}
