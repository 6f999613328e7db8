//! Graph-attention forecaster conditioned on node embeddings.

use super::{check_window, HORIZON};
use crate::autodiff::{Bound, ParamId, ParamStore, RngStream, Tape, Var};
use crate::nn::{Activation, Mlp};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct GdnForecaster {
    /// Shared projection `[w, d]`.
    pub w: ParamId,
    /// Attention vector split into the halves acting on `g_i` and `g_j`.
    pub a_dst: ParamId,
    pub a_src: ParamId,
    /// Node embeddings `[N, d]`, shared with the kNN graph learner.
    pub v: ParamId,
    pub head: Mlp,
    pub window: usize,
    pub dim: usize,
}

impl GdnForecaster {
    pub fn new(store: &mut ParamStore, v: ParamId, window: usize, dim: usize, rng: &mut RngStream) -> Self {
        GdnForecaster {
            w: store.glorot("gdn.w", window, dim, rng),
            a_dst: store.glorot("gdn.att_dst", 2 * dim, 1, rng),
            a_src: store.glorot("gdn.att_src", 2 * dim, 1, rng),
            v,
            head: Mlp::new(store, "gdn.head", &[dim, dim, HORIZON], Activation::Relu, rng),
            window,
            dim,
        }
    }

    /// Attention coefficients `[B, N, N]` and aggregated node states `[B, N, d]`.
    pub fn attend(&self, tape: &mut Tape, p: &Bound, windows: Var, adj: Var) -> Result<(Var, Var)> {
        let (b, n) = check_window(tape, windows, self.window)?;
        let mask = neighborhood_mask(tape, adj, b, n)?;
        let wz = tape.matmul(windows, p[self.w])?;
        let vs = tape.shape(p[self.v]).to_vec();
        if vs != [n, self.dim] {
            return Err(Error::shape("gdn attend", format!("embeddings {vs:?} for {n} nodes")));
        }
        let vb = tape.constant(crate::autodiff::Tensor::zeros([b, n, self.dim]));
        let vb = tape.add(vb, p[self.v])?;
        let g = tape.concat(&[vb, wz], 2)?;
        let s_dst = tape.matmul(g, p[self.a_dst])?;
        let s_src = tape.matmul(g, p[self.a_src])?;
        let s_src = tape.permute(s_src, &[0, 2, 1])?;
        let e = tape.add(s_dst, s_src)?;
        let e = tape.leaky_relu(e);
        let alpha = tape.softmax(e, Some(mask))?;
        let h = tape.bmm(alpha, wz)?;
        Ok((alpha, tape.relu(h)))
    }

    /// `windows: [B, N, w]` -> `[B, N, 12]`.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, windows: Var, adj: Var) -> Result<Var> {
        let (_, h) = self.attend(tape, p, windows, adj)?;
        let vh = tape.mul(h, p[self.v])?;
        self.head.forward(tape, p, vh)
    }
}

/// `mask[b][i][j]` is true when `j` is an in-neighbour of `i` or `j == i`.
fn neighborhood_mask(tape: &Tape, adj: Var, b: usize, n: usize) -> Result<Vec<bool>> {
    let a = tape.value(adj);
    let per_batch = match a.shape() {
        [r, c] if *r == n && *c == n => false,
        [bb, r, c] if *bb == b && *r == n && *c == n => true,
        s => return Err(Error::shape("gdn adjacency", format!("{s:?} for {b} x {n} nodes"))),
    };
    let mut mask = Vec::with_capacity(b * n * n);
    for bi in 0..b {
        let blk = if per_batch { &a.data()[bi * n * n..(bi + 1) * n * n] } else { a.data() };
        mask.extend(blk.iter().enumerate().map(|(k, &w)| w > 0.0 || k / n == k % n));
    }
    Ok(mask)
}
