//! Cosine-similarity kNN graph over learned node embeddings.

use super::adjacency::{top_k_per_row, AdjacencyMatrix, EdgeScores, GraphSource};
use crate::autodiff::{ParamId, ParamStore, RngStream, Tensor};
use crate::{Error, Result};

/// Full `N x N` cosine similarity matrix of the rows of `v`.
pub fn cosine_matrix(v: &Tensor) -> Result<Vec<f64>> {
    if v.rank() != 2 {
        return Err(Error::shape("cosine", format!("{:?} is not a matrix", v.shape())));
    }
    let norms: Vec<f64> = v.rows().map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    if let Some(i) = norms.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::invalid(format!("embedding row {i} has zero norm")));
    }
    let rows: Vec<&[f64]> = v.rows().collect();
    let n = rows.len();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let dot: f64 = rows[i].iter().zip(rows[j]).map(|(a, b)| a * b).sum();
            out[i * n + j] = dot / (norms[i] * norms[j]);
        }
    }
    Ok(out)
}

/// Directed kNN graph: row `i` marks the `k` most cosine-similar other
/// nodes (lower index wins ties) with weight 1.
pub fn gdn_knn_adjacency(v: &Tensor, k: usize) -> Result<(EdgeScores, AdjacencyMatrix)> {
    let n = v.shape().first().copied().unwrap_or(0);
    if k == 0 || k + 1 > n {
        return Err(Error::invalid(format!("K = {k} outside 1..={} for {n} nodes", n.saturating_sub(1))));
    }
    let cos = cosine_matrix(v)?;
    let mut w = vec![0.0; n * n];
    for (i, cols) in top_k_per_row(&cos, n, k, true).into_iter().enumerate() {
        for j in cols {
            w[i * n + j] = 1.0;
        }
    }
    Ok((
        EdgeScores::new(n, cos, "gdn", 0)?,
        AdjacencyMatrix::new(n, w, true, GraphSource::LearnedGdn)?,
    ))
}

/// Trainable node embeddings `V`; shared with the GDN forecaster.
#[derive(Clone, Debug)]
pub struct GdnLearner {
    pub v: ParamId,
    pub k: usize,
}

impl GdnLearner {
    pub fn new(store: &mut ParamStore, n: usize, dim: usize, k: usize, rng: &mut RngStream) -> Result<Self> {
        if k == 0 || k + 1 > n {
            return Err(Error::invalid(format!("K = {k} outside 1..={} for {n} nodes", n.saturating_sub(1))));
        }
        Ok(GdnLearner {
            v: store.glorot("gdn.embedding", n, dim, rng),
            k,
        })
    }

    /// kNN graph from the current embedding values (not differentiated).
    pub fn adjacency(&self, store: &ParamStore) -> Result<(EdgeScores, AdjacencyMatrix)> {
        gdn_knn_adjacency(store.get(self.v), self.k)
    }
}
