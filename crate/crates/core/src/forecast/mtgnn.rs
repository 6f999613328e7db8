//! Three blocks of inception temporal convolution followed by graph mixing.

use super::{check_window, HORIZON};
use crate::autodiff::{Bound, Degree, ParamId, ParamStore, RngStream, Tape, Tensor, Var};
use crate::nn::Linear;
use crate::{Error, Result};

pub const INCEPTION_KERNELS: [usize; 3] = [2, 3, 5];
pub const BLOCKS: usize = 3;

#[derive(Clone, Debug)]
pub struct MtgnnBlock {
    pub branches: Vec<(ParamId, ParamId)>,
    pub mix_w: ParamId,
    pub mix_b: ParamId,
    /// 1x1 graph-convolution weight `[C, C, 1]`.
    pub graph_w: ParamId,
}

#[derive(Clone, Debug)]
pub struct MtgnnForecaster {
    pub start_w: ParamId,
    pub start_b: ParamId,
    pub blocks: Vec<MtgnnBlock>,
    pub head: Linear,
    pub window: usize,
    pub channels: usize,
}

fn shrink() -> usize {
    INCEPTION_KERNELS.iter().max().copied().unwrap_or(1) - 1
}

/// Minimum input length of the temporal stack; shorter windows are left-padded
/// with zeros.
pub fn receptive_field() -> usize {
    BLOCKS * shrink() + 1
}

impl MtgnnForecaster {
    pub fn new(store: &mut ParamStore, window: usize, channels: usize, rng: &mut RngStream) -> Result<Self> {
        if window == 0 || channels == 0 {
            return Err(Error::invalid("window and channel count must be positive"));
        }
        let c = channels;
        let start_w = store.glorot_shaped("mtgnn.start.w", vec![c, 1, 1], 1, c, rng);
        let start_b = store.zeros("mtgnn.start.b", vec![c]);
        let blocks = (0..BLOCKS)
            .map(|l| {
                let branches = INCEPTION_KERNELS
                    .iter()
                    .map(|&k| {
                        let w = store.glorot_shaped(format!("mtgnn.b{l}.k{k}.w"), vec![c, c, k], c * k, c * k, rng);
                        let b = store.zeros(format!("mtgnn.b{l}.k{k}.b"), vec![c]);
                        (w, b)
                    })
                    .collect();
                let nb = INCEPTION_KERNELS.len() * c;
                MtgnnBlock {
                    branches,
                    mix_w: store.glorot_shaped(format!("mtgnn.b{l}.mix.w"), vec![c, nb, 1], nb, c, rng),
                    mix_b: store.zeros(format!("mtgnn.b{l}.mix.b"), vec![c]),
                    graph_w: store.glorot_shaped(format!("mtgnn.b{l}.graph.w"), vec![c, c, 1], c, c, rng),
                }
            })
            .collect();
        let len = window.max(receptive_field()) - BLOCKS * shrink();
        let head = Linear::new(store, "mtgnn.head", c * len, HORIZON, rng);
        Ok(MtgnnForecaster { start_w, start_b, blocks, head, window, channels })
    }

    /// `windows: [B, N, w]`, `adj: [N, N]` or `[B, N, N]` -> `[B, N, 12]`.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, windows: Var, adj: Var) -> Result<Var> {
        let (b, n) = check_window(tape, windows, self.window)?;
        let rf = receptive_field();
        let mut x = windows;
        if self.window < rf {
            let pad = tape.constant(Tensor::zeros([b, n, rf - self.window]));
            x = tape.concat(&[pad, windows], 2)?;
        }
        let mut len = self.window.max(rf);
        let support = tape.degree_normalize(adj, Degree::Out)?;
        let c = self.channels;
        let x = tape.reshape(x, &[b * n, 1, len])?;
        let mut h = tape.conv1d(x, p[self.start_w], Some(p[self.start_b]), 1, 1)?;
        for blk in &self.blocks {
            let out_len = len - shrink();
            let mut parts = Vec::with_capacity(blk.branches.len());
            for (&k, &(w, bias)) in INCEPTION_KERNELS.iter().zip(&blk.branches) {
                let y = tape.conv1d(h, p[w], Some(p[bias]), 1, 1)?;
                let have = len - k + 1;
                parts.push(tape.slice(y, 2, have - out_len, have)?);
            }
            let t = tape.concat(&parts, 1)?;
            let t = tape.tanh(t);
            let t = tape.conv1d(t, p[blk.mix_w], Some(p[blk.mix_b]), 1, 1)?;
            // H + S (H W), with S mixing over nodes
            let hw = tape.conv1d(t, p[blk.graph_w], None, 1, 1)?;
            let hw = tape.reshape(hw, &[b, n, c * out_len])?;
            let mixed = tape.bmm(support, hw)?;
            let mixed = tape.reshape(mixed, &[b * n, c, out_len])?;
            let g = tape.add(t, mixed)?;
            let res = tape.slice(h, 2, len - out_len, len)?;
            h = tape.add(g, res)?;
            len = out_len;
        }
        let flat = tape.reshape(h, &[b, n, c * len])?;
        let flat = tape.relu(flat);
        self.head.forward(tape, p, flat)
    }
}
