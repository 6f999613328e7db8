use std::f64::consts::TAU;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{RngStream, Tensor};
use crate::graph::{AdjacencyMatrix, GraphSource};
use crate::{Error, Result};

/// `s_t = amplitude * sin(frequency * t + phase) + offset`, with `frequency`
/// in radians per step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinusoidParams {
    pub frequency: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub offset: f64,
}

impl SinusoidParams {
    /// Frequency U(0.01, 0.1) cycles per step, amplitude U(0.5, 2),
    /// phase U(0, 2 pi), offset U(-1, 1).
    pub fn sample(rng: &mut RngStream) -> Self {
        SinusoidParams {
            frequency: TAU * rng.random_range(0.01..0.1),
            amplitude: rng.random_range(0.5..2.0),
            phase: rng.random_range(0.0..TAU),
            offset: rng.random_range(-1.0..1.0),
        }
    }
}

pub fn sample_sinusoid(params: &SinusoidParams, len: usize) -> Vec<f64> {
    (0..len)
        .map(|t| params.amplitude * (params.frequency * t as f64 + params.phase).sin() + params.offset)
        .collect()
}

/// Undirected stochastic block model with `k` contiguous, balanced clusters.
/// Returns the graph and each node's cluster label.
pub fn sbm_sample(n: usize, k: usize, p_in: f64, p_out: f64, rng: &mut RngStream) -> Result<(AdjacencyMatrix, Vec<usize>)> {
    if k == 0 || k > n {
        return Err(Error::invalid(format!("cluster count {k} must lie in 1..={n}")));
    }
    if !(0.0 <= p_out && p_out <= p_in && p_in <= 1.0) {
        return Err(Error::invalid(format!("need 0 <= p_out <= p_in <= 1, got p_in {p_in}, p_out {p_out}")));
    }
    let labels: Vec<usize> = (0..n).map(|i| i * k / n).collect();
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] { p_in } else { p_out };
            if rng.open01() < p {
                w[i * n + j] = 1.0;
                w[j * n + i] = 1.0;
            }
        }
    }
    Ok((AdjacencyMatrix::new(n, w, false, GraphSource::GroundTruth)?, labels))
}

/// Row-normalized transition matrix; isolated nodes get a self-loop.
pub fn transition_matrix(adj: &AdjacencyMatrix) -> Vec<f64> {
    let n = adj.n();
    let mut p = adj.weights().to_vec();
    for (i, r) in p.chunks_mut(n.max(1)).enumerate() {
        let s: f64 = r.iter().sum();
        if s > 0.0 {
            r.iter_mut().for_each(|v| *v /= s);
        } else {
            r[i] = 1.0;
        }
    }
    p
}

/// Personalized PageRank operator `r (I - (1 - r) P)^-1`.
pub fn ppr_matrix(adj: &AdjacencyMatrix, restart: f64) -> Result<Tensor> {
    if !(restart > 0.0 && restart < 1.0) {
        return Err(Error::invalid(format!("restart probability must lie in (0, 1), got {restart}")));
    }
    let n = adj.n();
    let p = DMatrix::from_row_slice(n, n, &transition_matrix(adj));
    let m = DMatrix::<f64>::identity(n, n) - p * (1.0 - restart);
    let inv = m.lu().try_inverse().ok_or_else(|| Error::invalid("PPR system is singular"))?;
    let s = inv * restart;
    // the exact inverse is entrywise nonnegative; clip LU round-off
    let data = (0..n * n).map(|k| s[(k / n, k % n)].max(0.0)).collect();
    Tensor::new([n, n], data)
}
