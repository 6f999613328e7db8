//! Small layer building blocks shared by the learners and forecasters.

use crate::autodiff::{Bound, ParamId, ParamStore, RngStream, Tape, Var};
use crate::Result;

/// `y = x W + b` applied over the last axis.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut RngStream) -> Self {
        Linear {
            weight: store.glorot(format!("{name}.w"), fan_in, fan_out, rng),
            bias: Some(store.zeros(format!("{name}.b"), vec![fan_out])),
        }
    }

    pub fn without_bias(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut RngStream) -> Self {
        Linear {
            weight: store.glorot(format!("{name}.w"), fan_in, fan_out, rng),
            bias: None,
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let y = tape.matmul(x, p[self.weight])?;
        match self.bias {
            Some(b) => tape.add(y, p[b]),
            None => Ok(y),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
        }
    }
}

/// Stack of linear layers with an activation between (not after) them.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

impl Mlp {
    /// `sizes` lists every width including input and output.
    pub fn new(store: &mut ParamStore, name: &str, sizes: &[usize], activation: Activation, rng: &mut RngStream) -> Self {
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect();
        Mlp { layers, activation }
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, p, h)?;
            if i + 1 < self.layers.len() {
                h = self.activation.apply(tape, h);
            }
        }
        Ok(h)
    }
}
