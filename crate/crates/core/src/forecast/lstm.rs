//! Graph-free baselines: one joint LSTM over all series, and `N` independent
//! univariate LSTMs.

use super::{check_window, HORIZON};
use crate::autodiff::{Bound, ParamId, ParamStore, RngStream, Tape, Tensor, Var};
use crate::Result;

/// Gate order in the stacked `4h` axis: input, forget, candidate, output.
fn lstm_update(tape: &mut Tape, gates: Var, c: Var, hidden: usize, axis: usize) -> Result<(Var, Var)> {
    let i = tape.slice(gates, axis, 0, hidden)?;
    let f = tape.slice(gates, axis, hidden, 2 * hidden)?;
    let g = tape.slice(gates, axis, 2 * hidden, 3 * hidden)?;
    let o = tape.slice(gates, axis, 3 * hidden, 4 * hidden)?;
    let i = tape.sigmoid(i);
    let f = tape.sigmoid(f);
    let g = tape.tanh(g);
    let o = tape.sigmoid(o);
    let fc = tape.mul(f, c)?;
    let ig = tape.mul(i, g)?;
    let c = tape.add(fc, ig)?;
    let tc = tape.tanh(c);
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}

#[derive(Clone, Debug)]
pub struct JointLstm {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b: ParamId,
    pub w_out: ParamId,
    pub b_out: ParamId,
    pub n: usize,
    pub window: usize,
    pub hidden: usize,
    pub horizon: usize,
}

impl JointLstm {
    pub fn new(store: &mut ParamStore, n: usize, window: usize, hidden: usize, rng: &mut RngStream) -> Self {
        JointLstm {
            w_x: store.glorot("lstm.w_x", n, 4 * hidden, rng),
            w_h: store.glorot("lstm.w_h", hidden, 4 * hidden, rng),
            b: store.zeros("lstm.b", vec![4 * hidden]),
            w_out: store.glorot("lstm.w_out", hidden, n, rng),
            b_out: store.zeros("lstm.b_out", vec![n]),
            n,
            window,
            hidden,
            horizon: HORIZON,
        }
    }

    fn cell(&self, tape: &mut Tape, p: &Bound, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let gx = tape.matmul(x, p[self.w_x])?;
        let gh = tape.matmul(h, p[self.w_h])?;
        let g = tape.add(gx, gh)?;
        let g = tape.add(g, p[self.b])?;
        lstm_update(tape, g, c, self.hidden, 1)
    }

    /// `windows: [B, N, w]` -> `[B, N, horizon]`.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, windows: Var) -> Result<Var> {
        let (b, n) = check_window(tape, windows, self.window)?;
        let mut h = tape.constant(Tensor::zeros([b, self.hidden]));
        let mut c = h;
        let mut x = h;
        for t in 0..self.window {
            let s = tape.slice(windows, 2, t, t + 1)?;
            x = tape.reshape(s, &[b, n])?;
            (h, c) = self.cell(tape, p, x, h, c)?;
        }
        let mut outs = Vec::with_capacity(self.horizon);
        for step in 0..self.horizon {
            if step > 0 {
                (h, c) = self.cell(tape, p, x, h, c)?;
            }
            let y = tape.matmul(h, p[self.w_out])?;
            x = tape.add(y, p[self.b_out])?;
            outs.push(tape.reshape(x, &[b, n, 1])?);
        }
        tape.concat(&outs, 2)
    }
}

/// Independent per-series LSTMs evaluated together with batched matmuls over
/// a leading node axis.
#[derive(Clone, Debug)]
pub struct LstmU {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b: ParamId,
    pub w_out: ParamId,
    pub b_out: ParamId,
    pub n: usize,
    pub window: usize,
    pub hidden: usize,
    pub horizon: usize,
}

impl LstmU {
    pub fn new(store: &mut ParamStore, n: usize, window: usize, hidden: usize, rng: &mut RngStream) -> Self {
        let h4 = 4 * hidden;
        LstmU {
            w_x: store.glorot_shaped("lstmu.w_x", vec![n, 1, h4], 1, h4, rng),
            w_h: store.glorot_shaped("lstmu.w_h", vec![n, hidden, h4], hidden, h4, rng),
            b: store.zeros("lstmu.b", vec![n, 1, h4]),
            w_out: store.glorot_shaped("lstmu.w_out", vec![n, hidden, 1], hidden, 1, rng),
            b_out: store.zeros("lstmu.b_out", vec![n, 1, 1]),
            n,
            window,
            hidden,
            horizon: HORIZON,
        }
    }

    fn cell(&self, tape: &mut Tape, p: &Bound, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let gx = tape.bmm(x, p[self.w_x])?;
        let gh = tape.bmm(h, p[self.w_h])?;
        let g = tape.add(gx, gh)?;
        let g = tape.add(g, p[self.b])?;
        lstm_update(tape, g, c, self.hidden, 2)
    }

    /// `windows: [B, N, w]` -> `[B, N, horizon]`.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, windows: Var) -> Result<Var> {
        let (b, n) = check_window(tape, windows, self.window)?;
        // node-major layout [N, B, w]
        let xs = tape.permute(windows, &[1, 0, 2])?;
        let mut h = tape.constant(Tensor::zeros([n, b, self.hidden]));
        let mut c = h;
        let mut x = h;
        for t in 0..self.window {
            x = tape.slice(xs, 2, t, t + 1)?;
            (h, c) = self.cell(tape, p, x, h, c)?;
        }
        let mut outs = Vec::with_capacity(self.horizon);
        for step in 0..self.horizon {
            if step > 0 {
                (h, c) = self.cell(tape, p, x, h, c)?;
            }
            let y = tape.bmm(h, p[self.w_out])?;
            x = tape.add(y, p[self.b_out])?;
            outs.push(x);
        }
        let y = tape.concat(&outs, 2)?;
        tape.permute(y, &[1, 0, 2])
    }
}
