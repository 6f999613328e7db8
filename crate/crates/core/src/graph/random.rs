use super::adjacency::{AdjacencyMatrix, GraphSource};
use crate::autodiff::RngStream;
use crate::{Error, Result};

/// Target expected out-degree for a random graph on `n` nodes.
pub fn expected_degree(n: usize) -> usize {
    match n {
        n if n >= 100 => 30,
        n if n >= 20 => 10,
        _ => 3,
    }
}

/// Edge probability of [`er_random_graph`], capped at 1 for tiny graphs.
pub fn er_edge_probability(n: usize) -> f64 {
    (expected_degree(n) as f64 / (n - 1) as f64).min(1.0)
}

/// Directed Erdős–Rényi graph without self-loops, binary weights.
pub fn er_random_graph(n: usize, rng: &mut RngStream) -> Result<AdjacencyMatrix> {
    if n < 2 {
        return Err(Error::invalid(format!("random graph needs at least 2 nodes, got {n}")));
    }
    let p = er_edge_probability(n);
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.open01() < p {
                w[i * n + j] = 1.0;
            }
        }
    }
    AdjacencyMatrix::new(n, w, true, GraphSource::Random)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degree_brackets() {
        assert_eq!(er_edge_probability(150), 30.0 / 149.0);
        assert_eq!(er_edge_probability(100), 30.0 / 99.0);
        assert_eq!(er_edge_probability(50), 10.0 / 49.0);
        assert_eq!(er_edge_probability(20), 10.0 / 19.0);
        assert_eq!(er_edge_probability(10), 3.0 / 9.0);
        assert_eq!(er_edge_probability(3), 1.0);
    }

    #[test]
    fn no_self_loops() {
        let mut rng = RngStream::new(5);
        let g = er_random_graph(12, &mut rng).unwrap();
        assert!((0..12).all(|i| g.weight(i, i) == 0.0));
        assert!(er_random_graph(1, &mut rng).is_err());
    }
}
