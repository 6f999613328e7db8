//! MLP decoder driven by per-pair edge types; predicts additive deltas.

use super::{check_window, HORIZON};
use crate::autodiff::{Bound, ParamStore, RngStream, Tape, Var};
use crate::graph::{PairIndex, NO_EDGE};
use crate::nn::{Activation, Mlp};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct NriDecoder {
    /// One message MLP per edge type; the no-edge slot is `None`.
    pub messages: Vec<Option<Mlp>>,
    pub node: Mlp,
    pub pairs: PairIndex,
    pub window: usize,
    pub horizon: usize,
}

impl NriDecoder {
    pub fn new(store: &mut ParamStore, n: usize, window: usize, hidden: usize, edge_types: usize, rng: &mut RngStream) -> Result<Self> {
        if edge_types < 2 {
            return Err(Error::invalid(format!("need at least 2 edge types, got {edge_types}")));
        }
        let messages = (0..edge_types)
            .map(|e| {
                (e != NO_EDGE).then(|| {
                    Mlp::new(store, &format!("nri.dec.msg{e}"), &[2 * window, hidden, hidden], Activation::Relu, rng)
                })
            })
            .collect();
        let node = Mlp::new(store, "nri.dec.node", &[window + hidden, hidden, 1], Activation::Relu, rng);
        Ok(NriDecoder { messages, node, pairs: PairIndex::new(n), window, horizon: HORIZON })
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn edge_types(&self) -> usize {
        self.messages.len()
    }

    /// `windows: [B, N, w]`, `types: [B, P, E]` (rows sum to 1) -> `[B, N, horizon]`.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, windows: Var, types: Var) -> Result<Var> {
        let (b, _) = check_window(tape, windows, self.window)?;
        let e = self.edge_types();
        let ts = tape.shape(types).to_vec();
        if ts != [b, self.pairs.len(), e] {
            return Err(Error::shape("nri decode", format!("edge types {ts:?}, expected [{b}, {}, {e}]", self.pairs.len())));
        }
        if let Some(bad) = tape.value(types).data().chunks(e).position(|r| (r.iter().sum::<f64>() - 1.0).abs() > 1e-6) {
            return Err(Error::invalid(format!("edge-type row {bad} does not sum to 1")));
        }
        let w = self.window;
        let mut state = windows;
        let mut outs = Vec::with_capacity(self.horizon);
        for _ in 0..self.horizon {
            let pf = self.pairs.pair_features(tape, state)?;
            let mut msg: Option<Var> = None;
            for (k, mlp) in self.messages.iter().enumerate() {
                let Some(mlp) = mlp else { continue };
                let m = mlp.forward(tape, p, pf)?;
                let gate = tape.slice(types, 2, k, k + 1)?;
                let m = tape.mul(gate, m)?;
                msg = Some(match msg {
                    Some(acc) => tape.add(acc, m)?,
                    None => m,
                });
            }
            let msg = msg.ok_or_else(|| Error::invalid("decoder has no message types"))?;
            let agg = self.pairs.aggregate(tape, msg)?;
            let inp = tape.concat(&[state, agg], 2)?;
            let delta = self.node.forward(tape, p, inp)?;
            let last = tape.slice(state, 2, w - 1, w)?;
            let y = tape.add(last, delta)?;
            outs.push(y);
            let keep = tape.slice(state, 2, 1, w)?;
            state = tape.concat(&[keep, y], 2)?;
        }
        tape.concat(&outs, 2)
    }
}
