//! Per-window edge-type inference by two rounds of node/edge message passing.

use super::adjacency::{AdjacencyMatrix, GraphSource};
use crate::autodiff::{Bound, ParamStore, RngStream, Tape, Tensor, Var};
use crate::nn::{Activation, Mlp};
use crate::{Error, Result};

/// Edge type reserved for "no edge".
pub const NO_EDGE: usize = 0;

/// Ordered node pairs `(sender, receiver)` with `sender != receiver`, plus the
/// constant receiver incidence matrix used to sum incoming edge features.
#[derive(Clone, Debug)]
pub struct PairIndex {
    n: usize,
    senders: Vec<usize>,
    receivers: Vec<usize>,
    incoming: Tensor,
}

impl PairIndex {
    pub fn new(n: usize) -> Self {
        let mut senders = Vec::with_capacity(n * n.saturating_sub(1));
        let mut receivers = Vec::with_capacity(senders.capacity());
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    senders.push(i);
                    receivers.push(j);
                }
            }
        }
        let p = senders.len();
        let mut incoming = vec![0.0; n * p];
        for (k, &j) in receivers.iter().enumerate() {
            incoming[j * p + k] = 1.0;
        }
        PairIndex {
            n,
            incoming: Tensor::from_parts(vec![n, p], incoming),
            senders,
            receivers,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.senders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.senders.is_empty()
    }

    pub fn senders(&self) -> &[usize] {
        &self.senders
    }

    pub fn receivers(&self) -> &[usize] {
        &self.receivers
    }

    /// `[N, P]` matrix with a one where pair `p` ends at node `j`.
    pub fn incoming(&self) -> &Tensor {
        &self.incoming
    }

    /// `[B, P, d] -> [B, N, d]`: sum of edge features over each receiver.
    pub fn aggregate(&self, tape: &mut Tape, edges: Var) -> Result<Var> {
        let inc = tape.constant(self.incoming.clone());
        tape.bmm(inc, edges)
    }

    /// `[B, N, d] -> [B, P, 2d]`: `[h_sender || h_receiver]` per pair.
    pub fn pair_features(&self, tape: &mut Tape, nodes: Var) -> Result<Var> {
        let hs = tape.gather(nodes, 1, &self.senders)?;
        let hr = tape.gather(nodes, 1, &self.receivers)?;
        tape.concat(&[hs, hr], 2)
    }
}

#[derive(Clone, Debug)]
pub struct NriEncoder {
    pub emb: Mlp,
    pub edge1: Mlp,
    pub node1: Mlp,
    pub edge2: Mlp,
    pub window: usize,
    pub edge_types: usize,
    pub pairs: PairIndex,
}

impl NriEncoder {
    pub fn new(store: &mut ParamStore, n: usize, window: usize, dim: usize, edge_types: usize, rng: &mut RngStream) -> Result<Self> {
        if edge_types < 2 {
            return Err(Error::invalid(format!("need at least 2 edge types, got {edge_types}")));
        }
        if n < 2 || window == 0 || dim == 0 {
            return Err(Error::invalid("NRI encoder needs n >= 2, window >= 1 and dim >= 1"));
        }
        let r = Activation::Relu;
        Ok(NriEncoder {
            emb: Mlp::new(store, "nri.enc.emb", &[window, dim, dim], r, rng),
            edge1: Mlp::new(store, "nri.enc.edge1", &[2 * dim, dim, dim], r, rng),
            node1: Mlp::new(store, "nri.enc.node1", &[dim, dim, dim], r, rng),
            edge2: Mlp::new(store, "nri.enc.edge2", &[2 * dim, dim, edge_types], r, rng),
            window,
            edge_types,
            pairs: PairIndex::new(n),
        })
    }

    /// Edge-type logits `[B, P, E]` for windows `[B, N, w]`.
    pub fn encode(&self, tape: &mut Tape, p: &Bound, windows: Var) -> Result<Var> {
        let s = tape.shape(windows).to_vec();
        if s.len() != 3 || s[1] != self.pairs.n() || s[2] != self.window {
            return Err(Error::shape(
                "nri encode",
                format!("expected [B, {}, {}], got {s:?}", self.pairs.n(), self.window),
            ));
        }
        let h1 = self.emb.forward(tape, p, windows)?;
        let pair1 = self.pairs.pair_features(tape, h1)?;
        let e1 = self.edge1.forward(tape, p, pair1)?;
        let agg = self.pairs.aggregate(tape, e1)?;
        let h2 = self.node1.forward(tape, p, agg)?;
        let pair2 = self.pairs.pair_features(tape, h2)?;
        self.edge2.forward(tape, p, pair2)
    }
}

/// Mean over windows of `1 - q(no edge)`, laid out as a dense `N x N` score
/// matrix (`[receiver][sender]`, zero diagonal).
pub fn nri_edge_scores(pairs: &PairIndex, posterior: &Tensor) -> Result<Vec<f64>> {
    let s = posterior.shape();
    if s.len() != 3 || s[1] != pairs.len() {
        return Err(Error::shape("nri edge scores", format!("{s:?} for {} pairs", pairs.len())));
    }
    let (b, p, e) = (s[0], s[1], s[2]);
    let n = pairs.n();
    let mut out = vec![0.0; n * n];
    if b == 0 {
        return Ok(out);
    }
    for bi in 0..b {
        for k in 0..p {
            let q0 = posterior.data()[(bi * p + k) * e + NO_EDGE];
            out[pairs.receivers[k] * n + pairs.senders[k]] += (1.0 - q0) / b as f64;
        }
    }
    Ok(out)
}

/// Binary graph for one window from one-hot edge types `[P, E]`.
pub fn nri_adjacency(pairs: &PairIndex, onehot: &[f64], edge_types: usize) -> Result<AdjacencyMatrix> {
    if onehot.len() != pairs.len() * edge_types {
        return Err(Error::shape("nri adjacency", format!("{} values for {} pairs", onehot.len(), pairs.len())));
    }
    let n = pairs.n();
    let mut w = vec![0.0; n * n];
    for (k, row) in onehot.chunks(edge_types).enumerate() {
        if row[NO_EDGE] < 0.5 {
            w[pairs.receivers[k] * n + pairs.senders[k]] = 1.0;
        }
    }
    AdjacencyMatrix::new(n, w, true, GraphSource::LearnedNri)
}
