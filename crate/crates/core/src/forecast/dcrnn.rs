//! Diffusion-convolutional GRU encoder/decoder.

use super::diffusion::{diffuse, diffusion_supports, DIFFUSION_ORDER};
use super::{check_window, HORIZON};
use crate::autodiff::{Bound, ParamId, ParamStore, RngStream, Tape, Tensor, Var};
use crate::nn::Linear;
use crate::{Error, Result};

/// One recurrent cell. `w_ru` holds the stacked reset and update gate
/// weights side by side (`[.., 2h]`), `w_c` the candidate weights.
#[derive(Clone, Debug)]
pub struct DcrnnCell {
    pub w_ru: ParamId,
    pub b_ru: ParamId,
    pub w_c: ParamId,
    pub b_c: ParamId,
    pub input_dim: usize,
    pub hidden: usize,
}

impl DcrnnCell {
    pub fn new(store: &mut ParamStore, name: &str, input_dim: usize, hidden: usize, rng: &mut RngStream) -> Self {
        let rows = 2 * DIFFUSION_ORDER * (input_dim + hidden);
        let w_ru = store.glorot(format!("{name}.w_ru"), rows, 2 * hidden, rng);
        let b_ru = store.add(format!("{name}.b_ru"), Tensor::ones([2 * hidden]));
        let w_c = store.glorot(format!("{name}.w_c"), rows, hidden, rng);
        let b_c = store.zeros(format!("{name}.b_c"), vec![hidden]);
        DcrnnCell { w_ru, b_ru, w_c, b_c, input_dim, hidden }
    }

    /// `z: [B, N, d_in]`, `h: [B, N, h]` -> next hidden state.
    pub fn step(&self, tape: &mut Tape, p: &Bound, supports: &[Var; 2], z: Var, h: Var) -> Result<Var> {
        let zs = tape.shape(z);
        let hs = tape.shape(h);
        if zs.len() != 3 || hs.len() != 3 || zs[..2] != hs[..2] || zs[2] != self.input_dim || hs[2] != self.hidden {
            return Err(Error::shape("dcrnn step", format!("input {zs:?}, hidden {hs:?}")));
        }
        let zh = tape.concat(&[z, h], 2)?;
        let d = diffuse(tape, supports, zh, DIFFUSION_ORDER)?;
        let g = tape.matmul(d, p[self.w_ru])?;
        let g = tape.add(g, p[self.b_ru])?;
        let g = tape.sigmoid(g);
        let r = tape.slice(g, 2, 0, self.hidden)?;
        let u = tape.slice(g, 2, self.hidden, 2 * self.hidden)?;
        let rh = tape.mul(r, h)?;
        let zrh = tape.concat(&[z, rh], 2)?;
        let d = diffuse(tape, supports, zrh, DIFFUSION_ORDER)?;
        let c = tape.matmul(d, p[self.w_c])?;
        let c = tape.add(c, p[self.b_c])?;
        let c = tape.tanh(c);
        // u * h + (1 - u) * c
        let diff = tape.sub(h, c)?;
        let carry = tape.mul(u, diff)?;
        tape.add(c, carry)
    }
}

/// Encoder consumes the window step by step; the decoder rolls out
/// `horizon` steps feeding back its own predictions.
#[derive(Clone, Debug)]
pub struct Dcrnn {
    pub encoder: DcrnnCell,
    pub decoder: DcrnnCell,
    pub output: Linear,
    pub window: usize,
    pub horizon: usize,
}

impl Dcrnn {
    pub fn new(store: &mut ParamStore, window: usize, hidden: usize, rng: &mut RngStream) -> Self {
        Dcrnn {
            encoder: DcrnnCell::new(store, "dcrnn.enc", 1, hidden, rng),
            decoder: DcrnnCell::new(store, "dcrnn.dec", 1, hidden, rng),
            output: Linear::new(store, "dcrnn.out", hidden, 1, rng),
            window,
            horizon: HORIZON,
        }
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    /// `windows: [B, N, w]`, `adj: [N, N]` or `[B, N, N]` -> `[B, N, horizon]`.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, windows: Var, adj: Var) -> Result<Var> {
        let (b, n) = check_window(tape, windows, self.window)?;
        let supports = diffusion_supports(tape, adj)?;
        let mut h = tape.constant(Tensor::zeros([b, n, self.encoder.hidden]));
        let mut z = windows;
        for t in 0..self.window {
            z = tape.slice(windows, 2, t, t + 1)?;
            h = self.encoder.step(tape, p, &supports, z, h)?;
        }
        let mut outs = Vec::with_capacity(self.horizon);
        for _ in 0..self.horizon {
            h = self.decoder.step(tape, p, &supports, z, h)?;
            z = self.output.forward(tape, p, h)?;
            outs.push(z);
        }
        tape.concat(&outs, 2)
    }
}
