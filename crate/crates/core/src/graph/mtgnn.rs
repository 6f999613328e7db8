//! Skew-symmetric node-embedding scores with per-row top-K sparsification.

use super::adjacency::{top_k_per_row, AdjacencyMatrix, EdgeScores, GraphSource};
use crate::autodiff::{Bound, ParamId, ParamStore, RngStream, Tape, Tensor, Var};
use crate::{Error, Result};

/// Two embedding tables plus the tanh saturation `alpha`.
#[derive(Clone, Debug)]
pub struct NodePairEmbeddings {
    pub e1: Tensor,
    pub e2: Tensor,
    pub alpha: f64,
}

/// `ReLU(tanh(alpha (M1 M2^T - M2 M1^T)))` with `Mi = tanh(alpha Ei Wi)`.
pub fn skew_scores(tape: &mut Tape, e1: Var, e2: Var, w1: Var, w2: Var, alpha: f64) -> Result<Var> {
    if !(alpha > 0.0) {
        return Err(Error::invalid(format!("saturation alpha must be positive, got {alpha}")));
    }
    let a = tape.matmul(e1, w1)?;
    let a = tape.scale(a, alpha);
    let m1 = tape.tanh(a);
    let b = tape.matmul(e2, w2)?;
    let b = tape.scale(b, alpha);
    let m2 = tape.tanh(b);
    let m1t = tape.permute(m1, &[1, 0])?;
    let m2t = tape.permute(m2, &[1, 0])?;
    let p = tape.matmul(m1, m2t)?;
    let q = tape.matmul(m2, m1t)?;
    let d = tape.sub(p, q)?;
    let d = tape.scale(d, alpha);
    let t = tape.tanh(d);
    Ok(tape.relu(t))
}

/// Keeps the `k` largest entries of every row of a square score matrix.
/// Gradients flow only through the kept entries.
pub fn top_k_rows(tape: &mut Tape, scores: Var, k: usize) -> Result<Var> {
    let s = tape.shape(scores).to_vec();
    if s.len() != 2 || s[0] != s[1] {
        return Err(Error::shape("top_k_rows", format!("{s:?} is not square")));
    }
    let n = s[0];
    let keep = top_k_per_row(tape.value(scores).data(), n, k, true);
    let mut mask = vec![0.0; n * n];
    for (i, cols) in keep.iter().enumerate() {
        for &j in cols {
            mask[i * n + j] = 1.0;
        }
    }
    tape.mul_const(scores, mask)
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k + 1 > n {
        return Err(Error::invalid(format!("K = {k} outside 1..={} for {n} nodes", n.saturating_sub(1))));
    }
    Ok(())
}

/// Dense scores and the top-K adjacency for fixed embeddings and weights.
pub fn mtgnn_adjacency(emb: &NodePairEmbeddings, w1: &Tensor, w2: &Tensor, k: usize) -> Result<(EdgeScores, AdjacencyMatrix)> {
    let n = emb.e1.shape().first().copied().unwrap_or(0);
    check_k(k, n)?;
    let mut tape = Tape::new();
    let e1 = tape.constant(emb.e1.clone());
    let e2 = tape.constant(emb.e2.clone());
    let w1 = tape.constant(w1.clone());
    let w2 = tape.constant(w2.clone());
    let s = skew_scores(&mut tape, e1, e2, w1, w2, emb.alpha)?;
    let a = top_k_rows(&mut tape, s, k)?;
    let scores = EdgeScores::new(n, tape.value(s).data().to_vec(), "mtgnn", 0)?;
    let adj = AdjacencyMatrix::from_tensor(tape.value(a), true, GraphSource::LearnedMtgnn)?;
    Ok((scores, adj))
}

/// Trainable MTGNN graph learner.
#[derive(Clone, Debug)]
pub struct MtgnnLearner {
    pub e1: ParamId,
    pub e2: ParamId,
    pub w1: ParamId,
    pub w2: ParamId,
    pub alpha: f64,
    pub k: usize,
    pub n: usize,
}

impl MtgnnLearner {
    pub fn new(store: &mut ParamStore, n: usize, dim: usize, alpha: f64, k: usize, rng: &mut RngStream) -> Result<Self> {
        check_k(k, n)?;
        if !(alpha > 0.0) {
            return Err(Error::invalid(format!("saturation alpha must be positive, got {alpha}")));
        }
        Ok(MtgnnLearner {
            e1: store.glorot("mtgnn.graph.e1", n, dim, rng),
            e2: store.glorot("mtgnn.graph.e2", n, dim, rng),
            w1: store.glorot("mtgnn.graph.w1", dim, dim, rng),
            w2: store.glorot("mtgnn.graph.w2", dim, dim, rng),
            alpha,
            k,
            n,
        })
    }

    /// Returns `(scores, sparsified adjacency)` on the tape.
    pub fn forward(&self, tape: &mut Tape, p: &Bound) -> Result<(Var, Var)> {
        let s = skew_scores(tape, p[self.e1], p[self.e2], p[self.w1], p[self.w2], self.alpha)?;
        let a = top_k_rows(tape, s, self.k)?;
        Ok((s, a))
    }
}
