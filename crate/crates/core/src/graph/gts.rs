//! Whole-series convolutional encoder, pairwise edge probabilities and
//! straight-through Bernoulli graph sampling.

use super::adjacency::{AdjacencyMatrix, EdgeScores, GraphSource};
use crate::autodiff::{Bound, ParamId, ParamStore, RngStream, Tape, Tensor, Var};
use crate::nn::{Activation, Linear, Mlp};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GtsConfig {
    pub conv: Vec<ConvSpec>,
    pub embed_dim: usize,
    /// Hidden width of the pair MLP; `None` means a single linear layer.
    pub pair_hidden: Option<usize>,
}

impl Default for GtsConfig {
    fn default() -> Self {
        GtsConfig {
            conv: vec![
                ConvSpec { channels: 8, kernel: 8, stride: 4 },
                ConvSpec { channels: 16, kernel: 8, stride: 4 },
            ],
            embed_dim: 32,
            pair_hidden: Some(32),
        }
    }
}

impl GtsConfig {
    /// Length after every convolution, or an error if the series is too short.
    pub fn output_len(&self, series_len: usize) -> Result<usize> {
        let mut len = series_len;
        for (i, c) in self.conv.iter().enumerate() {
            if c.kernel == 0 || c.stride == 0 {
                return Err(Error::invalid("convolution kernel and stride must be positive"));
            }
            if len < c.kernel {
                return Err(Error::invalid(format!(
                    "training series of length {series_len} too short for convolution layer {i} (kernel {})",
                    c.kernel
                )));
            }
            len = (len - c.kernel) / c.stride + 1;
        }
        Ok(len)
    }
}

#[derive(Clone, Debug)]
struct ConvLayer {
    w: ParamId,
    b: ParamId,
    stride: usize,
}

#[derive(Clone, Debug)]
pub struct GtsLearner {
    conv: Vec<ConvLayer>,
    fc: Linear,
    pair: Mlp,
    n: usize,
    series_len: usize,
    flat: usize,
}

impl GtsLearner {
    pub fn new(store: &mut ParamStore, n: usize, series_len: usize, cfg: &GtsConfig, rng: &mut RngStream) -> Result<Self> {
        let out_len = cfg.output_len(series_len)?;
        let mut cin = 1;
        let mut conv = Vec::new();
        for (i, c) in cfg.conv.iter().enumerate() {
            let w = store.glorot_shaped(
                format!("gts.conv{i}.w"),
                vec![c.channels, cin, c.kernel],
                cin * c.kernel,
                c.channels * c.kernel,
                rng,
            );
            let b = store.zeros(format!("gts.conv{i}.b"), vec![c.channels]);
            conv.push(ConvLayer { w, b, stride: c.stride });
            cin = c.channels;
        }
        let flat = cin * out_len;
        let d = cfg.embed_dim;
        let fc = Linear::new(store, "gts.fc", flat, d, rng);
        let sizes: Vec<usize> = match cfg.pair_hidden {
            Some(h) => vec![2 * d, h, 1],
            None => vec![2 * d, 1],
        };
        let pair = Mlp::new(store, "gts.pair", &sizes, Activation::Relu, rng);
        Ok(GtsLearner { conv, fc, pair, n, series_len, flat })
    }

    pub fn series_len(&self) -> usize {
        self.series_len
    }

    /// Node embeddings `[N, d]` from the full training series `[N, T]`.
    pub fn encode(&self, tape: &mut Tape, p: &Bound, series: Var) -> Result<Var> {
        let s = tape.shape(series).to_vec();
        if s != [self.n, self.series_len] {
            return Err(Error::shape("gts encode", format!("expected [{}, {}], got {s:?}", self.n, self.series_len)));
        }
        let mut h = tape.reshape(series, &[self.n, 1, self.series_len])?;
        for (i, c) in self.conv.iter().enumerate() {
            if i > 0 {
                h = tape.relu(h);
            }
            h = tape.conv1d(h, p[c.w], Some(p[c.b]), c.stride, 1)?;
        }
        let h = tape.reshape(h, &[self.n, self.flat])?;
        self.fc.forward(tape, p, h)
    }

    /// `theta[i][j] = sigmoid(MLP([h_i || h_j]))`, zero on the diagonal.
    pub fn edge_probabilities(&self, tape: &mut Tape, p: &Bound, h: Var) -> Result<Var> {
        let n = self.n;
        let rows: Vec<usize> = (0..n * n).map(|k| k / n).collect();
        let cols: Vec<usize> = (0..n * n).map(|k| k % n).collect();
        let hi = tape.gather(h, 0, &rows)?;
        let hj = tape.gather(h, 0, &cols)?;
        let pair = tape.concat(&[hi, hj], 1)?;
        let logit = self.pair.forward(tape, p, pair)?;
        let logit = tape.reshape(logit, &[n, n])?;
        let theta = tape.sigmoid(logit);
        tape.mul_const(theta, off_diagonal_mask(n))
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, series: Var) -> Result<Var> {
        let h = self.encode(tape, p, series)?;
        self.edge_probabilities(tape, p, h)
    }
}

pub(crate) fn off_diagonal_mask(n: usize) -> Vec<f64> {
    (0..n * n).map(|k| if k / n == k % n { 0.0 } else { 1.0 }).collect()
}

/// Samples `A ~ Bernoulli(theta)` through the binary Gumbel-softmax relaxation.
pub fn gts_sample_adjacency(tape: &mut Tape, theta: Var, tau: f64, hard: bool, rng: &mut RngStream) -> Result<Var> {
    tape.gumbel_bernoulli(theta, tau, hard, rng)
}

/// Deterministic evaluation graph `1[theta > 0.5]` and the raw scores.
pub fn gts_threshold_adjacency(theta: &Tensor, seed: u64) -> Result<(EdgeScores, AdjacencyMatrix)> {
    let n = theta.shape().first().copied().unwrap_or(0);
    let w: Vec<f64> = theta
        .data()
        .iter()
        .enumerate()
        .map(|(k, &t)| if k / n != k % n && t > 0.5 { 1.0 } else { 0.0 })
        .collect();
    Ok((
        EdgeScores::new(n, theta.data().to_vec(), "gts", seed)?,
        AdjacencyMatrix::new(n, w, true, GraphSource::LearnedGts)?,
    ))
}
