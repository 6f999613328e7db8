//! One forecaster plus its graph source, behind a single forward call.

use super::config::{ExperimentConfig, GraphMode, ModelKind};
use super::data::WindowedSeries;
use crate::autodiff::{gumbel_softmax, streams, Bound, ParamStore, RngStream, Tape, Tensor, Var};
use crate::forecast::{Dcrnn, GdnForecaster, JointLstm, LstmU, MtgnnForecaster, NriDecoder};
use crate::graph::{
    default_k, er_random_graph, gts_threshold_adjacency, nri_edge_scores, AdjacencyMatrix, EdgeScores, GdnLearner,
    GraphSource, GtsConfig, GtsLearner, MtgnnLearner, NriEncoder, PairIndex, NO_EDGE,
};
use crate::{Error, Result};

#[derive(Clone, Debug)]
enum Net {
    Gts { learner: Option<GtsLearner>, forecaster: Dcrnn },
    Mtgnn { learner: Option<MtgnnLearner>, forecaster: MtgnnForecaster },
    Gdn { learner: GdnLearner, forecaster: GdnForecaster },
    Nri { encoder: Option<NriEncoder>, decoder: NriDecoder },
    Lstm(JointLstm),
    LstmU(LstmU),
}

/// Output of one forward pass.
pub struct Forward {
    /// `[B, N, horizon]` on the normalized scale.
    pub pred: Var,
    /// GTS edge probabilities `[N, N]` when the learner is active.
    pub theta: Option<Var>,
}

/// A forecaster, its parameters and the graph it runs on.
#[derive(Clone, Debug)]
pub struct JointModel {
    pub kind: ModelKind,
    pub mode: GraphMode,
    pub store: ParamStore,
    net: Net,
    /// Injected graph for every mode except `learned`.
    fixed: Option<AdjacencyMatrix>,
    /// Normalized training span, input of the GTS encoder.
    train_series: Option<Tensor>,
    n: usize,
    temperature: f64,
    seed: u64,
}

impl JointModel {
    /// Builds a fresh model; parameters come from the seed's INIT stream and
    /// a random graph from its GRAPH stream.
    pub fn new(cfg: &ExperimentConfig, data: &WindowedSeries, ground_truth: Option<&AdjacencyMatrix>) -> Result<Self> {
        let n = data.n();
        let w = data.window;
        let p = &cfg.params;
        let learned = cfg.graph_source == GraphMode::Learned;
        let k = p.k.unwrap_or_else(|| default_k(n));
        let mut rng = RngStream::with_stream(cfg.seed, streams::INIT);
        let mut store = ParamStore::new();
        let fixed = match cfg.graph_source {
            _ if !cfg.model.uses_graph() => None,
            GraphMode::Learned => None,
            GraphMode::GroundTruth => {
                let gt = ground_truth.ok_or(Error::MissingGroundTruth)?;
                if gt.n() != n {
                    return Err(Error::Config(format!("ground-truth graph has {} nodes, series has {n}", gt.n())));
                }
                Some(gt.clone())
            }
            GraphMode::Random => Some(er_random_graph(n, &mut RngStream::with_stream(cfg.seed, streams::GRAPH))?),
            GraphMode::None => Some(AdjacencyMatrix::empty(n, GraphSource::None)),
        };
        let mut train_series = None;
        let net = match cfg.model {
            ModelKind::Gts => {
                let learner = if learned {
                    let series = data.train_series();
                    let gcfg = GtsConfig { embed_dim: p.embed_dim, ..GtsConfig::default() };
                    let l = GtsLearner::new(&mut store, n, series.shape()[1], &gcfg, &mut rng)?;
                    train_series = Some(series);
                    Some(l)
                } else {
                    None
                };
                let forecaster = Dcrnn::new(&mut store, w, p.dcrnn_hidden, &mut rng).with_horizon(cfg.horizon);
                Net::Gts { learner, forecaster }
            }
            ModelKind::Mtgnn => {
                let learner = if learned {
                    Some(MtgnnLearner::new(&mut store, n, p.embed_dim, p.mtgnn_alpha, k, &mut rng)?)
                } else {
                    None
                };
                let forecaster = MtgnnForecaster::new(&mut store, w, p.mtgnn_channels, &mut rng)?;
                Net::Mtgnn { learner, forecaster }
            }
            ModelKind::Gdn => {
                let learner = GdnLearner::new(&mut store, n, p.gdn_dim, k, &mut rng)?;
                let forecaster = GdnForecaster::new(&mut store, learner.v, w, p.gdn_dim, &mut rng);
                Net::Gdn { learner, forecaster }
            }
            ModelKind::Nri => {
                let encoder = if learned {
                    Some(NriEncoder::new(&mut store, n, w, p.nri_hidden, p.edge_types, &mut rng)?)
                } else {
                    None
                };
                let decoder = NriDecoder::new(&mut store, n, w, p.nri_hidden, p.edge_types, &mut rng)?.with_horizon(cfg.horizon);
                Net::Nri { encoder, decoder }
            }
            ModelKind::Lstm => {
                let mut m = JointLstm::new(&mut store, n, w, p.lstm_hidden, &mut rng);
                m.horizon = cfg.horizon;
                Net::Lstm(m)
            }
            ModelKind::LstmU => {
                let mut m = LstmU::new(&mut store, n, w, p.lstm_hidden, &mut rng);
                m.horizon = cfg.horizon;
                Net::LstmU(m)
            }
        };
        Ok(JointModel {
            kind: cfg.model,
            mode: cfg.graph_source,
            store,
            net,
            fixed,
            train_series,
            n,
            temperature: p.temperature,
            seed: cfg.seed,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Forecasts for `inputs: [B, N, w]`. Training mode draws hard
    /// straight-through samples from `rng`; evaluation is deterministic.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, inputs: Var, train: bool, rng: &mut RngStream) -> Result<Forward> {
        let mut theta = None;
        let pred = match &self.net {
            Net::Gts { learner, forecaster } => {
                let adj = match learner {
                    Some(l) => {
                        let series = tape.constant(self.train_series.clone().expect("set with the learner"));
                        let t = l.forward(tape, p, series)?;
                        theta = Some(t);
                        if train {
                            tape.gumbel_bernoulli(t, self.temperature, true, rng)?
                        } else {
                            let (_, a) = gts_threshold_adjacency(tape.value(t), self.seed)?;
                            tape.constant(a.to_tensor())
                        }
                    }
                    None => self.fixed_tensor(tape),
                };
                forecaster.forward(tape, p, inputs, adj)?
            }
            Net::Mtgnn { learner, forecaster } => {
                let adj = match learner {
                    Some(l) => l.forward(tape, p)?.1,
                    None => self.fixed_tensor(tape),
                };
                forecaster.forward(tape, p, inputs, adj)?
            }
            Net::Gdn { learner, forecaster } => {
                let adj = match &self.fixed {
                    Some(a) => a.to_tensor(),
                    None => learner.adjacency(&self.store)?.1.to_tensor(),
                };
                let adj = tape.constant(adj);
                forecaster.forward(tape, p, inputs, adj)?
            }
            Net::Nri { encoder, decoder } => {
                let b = tape.shape(inputs)[0];
                let types = match encoder {
                    Some(enc) => {
                        let logits = enc.encode(tape, p, inputs)?;
                        if train {
                            gumbel_softmax(tape, logits, self.temperature, true, rng)?
                        } else {
                            let hard = argmax_onehot(tape.value(logits));
                            tape.constant(hard)
                        }
                    }
                    None => {
                        let a = self.fixed.as_ref().expect("fixed graph when the encoder is off");
                        tape.constant(adjacency_onehots(&decoder.pairs, a, decoder.edge_types(), b))
                    }
                };
                decoder.forward(tape, p, inputs, types)?
            }
            Net::Lstm(m) => m.forward(tape, p, inputs)?,
            Net::LstmU(m) => m.forward(tape, p, inputs)?,
        };
        Ok(Forward { pred, theta })
    }

    fn fixed_tensor(&self, tape: &mut Tape) -> Var {
        let a = self.fixed.as_ref().expect("fixed graph when the learner is off");
        tape.constant(a.to_tensor())
    }

    /// Edge scores and the graph the forecaster uses at evaluation time.
    /// NRI scores average the edge posterior over `windows`. `None` for the
    /// graph-free LSTM baselines.
    pub fn graph(&self, windows: Option<&Tensor>) -> Result<Option<(EdgeScores, AdjacencyMatrix)>> {
        let model = self.kind.as_str();
        if let Some(a) = &self.fixed {
            let scores = EdgeScores::new(self.n, a.weights().to_vec(), model, self.seed)?;
            return Ok(Some((scores, a.clone())));
        }
        let mut tape = Tape::new();
        let p = self.store.bind(&mut tape);
        Ok(match &self.net {
            Net::Gts { learner: Some(l), .. } => {
                let series = tape.constant(self.train_series.clone().expect("set with the learner"));
                let t = l.forward(&mut tape, &p, series)?;
                Some(gts_threshold_adjacency(tape.value(t), self.seed)?)
            }
            Net::Mtgnn { learner: Some(l), .. } => {
                let (s, a) = l.forward(&mut tape, &p)?;
                let scores = EdgeScores::new(self.n, tape.value(s).data().to_vec(), model, self.seed)?;
                let adj = AdjacencyMatrix::from_tensor(tape.value(a), true, GraphSource::LearnedMtgnn)?;
                Some((scores, adj))
            }
            Net::Gdn { learner, .. } => {
                let (s, a) = learner.adjacency(&self.store)?;
                Some((EdgeScores { seed: self.seed, ..s }, a))
            }
            Net::Nri { encoder: Some(enc), .. } => {
                let windows = windows.ok_or_else(|| Error::invalid("NRI edge scores need input windows"))?;
                let x = tape.constant(windows.clone());
                let logits = enc.encode(&mut tape, &p, x)?;
                let q = tape.softmax(logits, None)?;
                let scores = nri_edge_scores(&enc.pairs, tape.value(q))?;
                let w: Vec<f64> = scores.iter().map(|&s| if s > 0.5 { 1.0 } else { 0.0 }).collect();
                let adj = AdjacencyMatrix::new(self.n, w, true, GraphSource::LearnedNri)?;
                Some((EdgeScores::new(self.n, scores, model, self.seed)?, adj))
            }
            Net::Lstm(_) | Net::LstmU(_) => None,
            _ => unreachable!("learner missing without a fixed graph"),
        })
    }
}

/// One-hot of the largest logit per row (lowest index on ties).
fn argmax_onehot(logits: &Tensor) -> Tensor {
    let e = *logits.shape().last().expect("rank >= 1");
    let mut out = vec![0.0; logits.numel()];
    for (row, dst) in logits.data().chunks(e).zip(out.chunks_mut(e)) {
        let best = (0..e).fold(0, |b, j| if row[j] > row[b] { j } else { b });
        dst[best] = 1.0;
    }
    Tensor::new(logits.shape().to_vec(), out).expect("same shape")
}

/// Fixed graph as edge-type one-hots `[B, P, E]`: type 1 where the receiver
/// draws on the sender, no-edge elsewhere.
fn adjacency_onehots(pairs: &PairIndex, a: &AdjacencyMatrix, e: usize, b: usize) -> Tensor {
    let p = pairs.len();
    let mut one = vec![0.0; p * e];
    for k in 0..p {
        let edge = a.weight(pairs.receivers()[k], pairs.senders()[k]) > 0.0;
        one[k * e + if edge { 1 } else { NO_EDGE }] = 1.0;
    }
    let data = one.iter().copied().cycle().take(b * p * e).collect();
    Tensor::new([b, p, e], data).expect("sized")
}
