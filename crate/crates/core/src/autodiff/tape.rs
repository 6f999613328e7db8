//! Wengert-list tape for reverse-mode differentiation.
//!
//! Every forward op appends one node holding its output value and the
//! handles of its inputs. `backward` walks the list in reverse once.

use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use super::kernels::{self, broadcast_offsets, broadcast_shape, gemm, permute_offsets};
use super::rng::RngStream;
use super::tensor::Tensor;
use crate::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    idx: usize,
}

/// Slope used by [`Tape::leaky_relu`].
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Degree {
    /// Normalize rows by out-degree (row sums).
    Out,
    /// Normalize rows by in-degree (column sums).
    In,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    BatchMatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Concat { inputs: Vec<Var>, axis: usize },
    Gather { x: Var, axis: usize, indices: Vec<usize> },
    Reshape(Var),
    Permute { x: Var, perm: Vec<usize> },
    Conv1d { x: Var, w: Var, bias: Option<Var>, stride: usize, dilation: usize },
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    LeakyRelu(Var),
    Softmax(Var),
    Sum { x: Var, axis: Option<usize> },
    Mean { x: Var, axis: Option<usize> },
    MulConst { x: Var, factor: Vec<f64> },
    DegreeNorm { a: Var, dir: Degree },
    StraightThrough { soft: Var },
    GumbelBernoulli { theta: Var, soft: Vec<f64>, tau: f64 },
    MaskedMae { pred: Var, target: Vec<f64>, mask: Vec<bool>, count: usize },
    Bce { prob: Var, target: Vec<f64>, mask: Vec<bool>, count: usize },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::BatchMatMul(..) => "bmm",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Concat { .. } => "concat",
            Op::Gather { .. } => "gather",
            Op::Reshape(..) => "reshape",
            Op::Permute { .. } => "permute",
            Op::Conv1d { .. } => "conv1d",
            Op::Sigmoid(..) => "sigmoid",
            Op::Tanh(..) => "tanh",
            Op::Relu(..) => "relu",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Softmax(..) => "softmax",
            Op::Sum { .. } => "sum",
            Op::Mean { .. } => "mean",
            Op::MulConst { .. } => "mul_const",
            Op::DegreeNorm { .. } => "degree_normalize",
            Op::StraightThrough { .. } => "straight_through",
            Op::GumbelBernoulli { .. } => "gumbel_bernoulli",
            Op::MaskedMae { .. } => "masked_mae",
            Op::Bce { .. } => "bce",
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b)
            | Op::BatchMatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b) => vec![*a, *b],
            Op::Scale(x, _)
            | Op::Reshape(x)
            | Op::Sigmoid(x)
            | Op::Tanh(x)
            | Op::Relu(x)
            | Op::LeakyRelu(x) => vec![*x],
            Op::Concat { inputs, .. } => inputs.clone(),
            Op::Gather { x, .. }
            | Op::Permute { x, .. }
            | Op::Softmax(x)
            | Op::Sum { x, .. }
            | Op::Mean { x, .. }
            | Op::MulConst { x, .. } => vec![*x],
            Op::Conv1d { x, w, bias, .. } => {
                let mut v = vec![*x, *w];
                v.extend(bias);
                v
            }
            Op::DegreeNorm { a, .. } => vec![*a],
            Op::StraightThrough { soft } => vec![*soft],
            Op::GumbelBernoulli { theta, .. } => vec![*theta],
            Op::MaskedMae { pred, .. } => vec![*pred],
            Op::Bce { prob, .. } => vec![*prob],
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.idx).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get_mut(v.idx).and_then(Option::take)
    }
}

/// Recorded computation graph.
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn node(&self, v: Var) -> &Node {
        debug_assert_eq!(v.tape, self.id, "variable from another tape");
        &self.nodes[v.idx]
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.node(v).value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.node(v).requires_grad
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.tape != self.id || v.idx >= self.nodes.len() {
            return Err(Error::NotOnTape);
        }
        Ok(())
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let inputs = op.inputs();
        let requires_grad = inputs.iter().any(|&i| self.nodes[i.idx].requires_grad);
        if cfg!(debug_assertions)
            && !value.all_finite()
            && inputs.iter().all(|&i| self.nodes[i.idx].value.all_finite())
        {
            panic!("{} produced non-finite output from finite inputs", op.name());
        }
        let idx = self.nodes.len();
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var { tape: self.id, idx }
    }

    /// Leaf that receives a gradient.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        let idx = self.nodes.len();
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var { tape: self.id, idx }
    }

    /// Leaf that is treated as a constant.
    pub fn constant(&mut self, value: Tensor) -> Var {
        let idx = self.nodes.len();
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var { tape: self.id, idx }
    }

    /// Copy of `x` that blocks gradient flow.
    pub fn detach(&mut self, x: Var) -> Var {
        let v = self.value(x).clone();
        self.constant(v)
    }

    // ----------------------------------------------------------------- linear algebra

    /// `a[..., k] x b[k, m] -> [..., m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.is_empty() || sb.len() != 2 || sa[sa.len() - 1] != sb[0] {
            return Err(Error::shape("matmul", format!("{sa:?} x {sb:?}")));
        }
        let k = sb[0];
        let m = sb[1];
        let rows = sa.iter().product::<usize>() / k.max(1);
        let mut out = vec![0.0; rows * m];
        gemm(rows, k, m, self.value(a).data(), false, self.value(b).data(), false, 0.0, &mut out);
        let mut shape = sa;
        *shape.last_mut().unwrap() = m;
        Ok(self.push(Tensor::from_parts(shape, out), Op::MatMul(a, b)))
    }

    /// Batched matmul: `a` is `[n, k]` (shared) or `[B, n, k]`, `b` is `[B, k, m]`.
    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let ok = sb.len() == 3
            && match sa.len() {
                2 => sa[1] == sb[1],
                3 => sa[0] == sb[0] && sa[2] == sb[1],
                _ => false,
            };
        if !ok {
            return Err(Error::shape("bmm", format!("{sa:?} x {sb:?}")));
        }
        let (batch, k, m) = (sb[0], sb[1], sb[2]);
        let n = sa[sa.len() - 2];
        let shared = sa.len() == 2;
        let mut out = vec![0.0; batch * n * m];
        let av = self.value(a).data();
        let bv = self.value(b).data();
        for bi in 0..batch {
            let a_blk = if shared { av } else { &av[bi * n * k..(bi + 1) * n * k] };
            gemm(
                n,
                k,
                m,
                a_blk,
                false,
                &bv[bi * k * m..(bi + 1) * k * m],
                false,
                0.0,
                &mut out[bi * n * m..(bi + 1) * n * m],
            );
        }
        Ok(self.push(Tensor::from_parts(vec![batch, n, m], out), Op::BatchMatMul(a, b)))
    }

    // ----------------------------------------------------------------- elementwise

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() == tb.shape() {
            let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
            return Ok(Tensor::from_parts(ta.shape().to_vec(), data));
        }
        let shape = broadcast_shape(ta.shape(), tb.shape())
            .ok_or_else(|| Error::shape(name, format!("{:?} vs {:?}", ta.shape(), tb.shape())))?;
        let oa = broadcast_offsets(&shape, ta.shape());
        let ob = broadcast_offsets(&shape, tb.shape());
        let (da, db) = (ta.data(), tb.data());
        let data = oa.iter().zip(&ob).map(|(&i, &j)| f(da[i], db[j])).collect();
        Ok(Tensor::from_parts(shape, data))
    }

    /// Elementwise sum with numpy-style broadcasting.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "add", |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(t, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let t = self.value(x).map(|v| v * s);
        self.push(t, Op::Scale(x, s))
    }

    /// Multiplies by a constant factor of identical shape (masks, dropout).
    pub fn mul_const(&mut self, x: Var, factor: Vec<f64>) -> Result<Var> {
        let tx = self.value(x);
        if factor.len() != tx.numel() {
            return Err(Error::shape("mul_const", format!("{} vs {}", factor.len(), tx.numel())));
        }
        let data = tx.data().iter().zip(&factor).map(|(a, b)| a * b).collect();
        let t = Tensor::from_parts(tx.shape().to_vec(), data);
        Ok(self.push(t, Op::MulConst { x, factor }))
    }

    /// Inverted dropout; identity when `rate` is 0 or `train` is false.
    pub fn dropout(&mut self, x: Var, rate: f64, train: bool, rng: &mut RngStream) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !train || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let factor = (0..self.value(x).numel())
            .map(|_| if rng.open01() < rate { 0.0 } else { keep })
            .collect();
        self.mul_const(x, factor)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = self.value(x).map(kernels::sigmoid);
        self.push(t, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let t = self.value(x).map(f64::tanh);
        self.push(t, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x).map(|v| v.max(0.0));
        self.push(t, Op::Relu(x))
    }

    pub fn leaky_relu(&mut self, x: Var) -> Var {
        let t = self.value(x).map(|v| if v > 0.0 { v } else { LEAKY_SLOPE * v });
        self.push(t, Op::LeakyRelu(x))
    }

    // ----------------------------------------------------------------- structural

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape.to_vec())?;
        Ok(self.push(t, Op::Reshape(x)))
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let mut seen = vec![false; shape.len()];
        if perm.len() != shape.len() || perm.iter().any(|&p| p >= shape.len() || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::shape("permute", format!("{perm:?} on {shape:?}")));
        }
        let offsets = permute_offsets(&shape, perm);
        let src = self.value(x).data();
        let data = offsets.iter().map(|&o| src[o]).collect();
        let out_shape = perm.iter().map(|&p| shape[p]).collect();
        Ok(self.push(Tensor::from_parts(out_shape, data), Op::Permute { x, perm: perm.to_vec() }))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::shape("concat", format!("axis {axis} on {base:?}")));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::shape("concat", format!("{s:?} vs {base:?} on axis {axis}")));
            }
            total += s[axis];
        }
        let (outer, _, inner) = axis_split(&base, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let t = self.value(v);
                let chunk = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        Ok(self.push(Tensor::from_parts(shape, data), Op::Concat { inputs: inputs.to_vec(), axis }))
    }

    /// Selects `indices` along `axis` (row gather / embedding lookup).
    pub fn gather(&mut self, x: Var, axis: usize, indices: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || indices.iter().any(|&i| i >= shape[axis]) {
            return Err(Error::shape("gather", format!("axis {axis} indices out of range for {shape:?}")));
        }
        let (outer, n, inner) = axis_split(&shape, axis);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * indices.len() * inner);
        for o in 0..outer {
            for &i in indices {
                let start = (o * n + i) * inner;
                data.extend_from_slice(&src[start..start + inner]);
            }
        }
        let mut out_shape = shape;
        out_shape[axis] = indices.len();
        Ok(self.push(
            Tensor::from_parts(out_shape, data),
            Op::Gather { x, axis, indices: indices.to_vec() },
        ))
    }

    /// Rows of an embedding table.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        self.gather(table, 0, ids)
    }

    pub fn slice(&mut self, x: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let extent = self.shape(x).get(axis).copied().unwrap_or(0);
        if start > end || end > extent {
            return Err(Error::shape("slice", format!("{start}..{end} on extent {extent}")));
        }
        let idx: Vec<usize> = (start..end).collect();
        self.gather(x, axis, &idx)
    }

    /// 1-D convolution without padding. `x: [B, C_in, L]`, `w: [C_out, C_in, K]`,
    /// optional `bias: [C_out]`.
    pub fn conv1d(&mut self, x: Var, w: Var, bias: Option<Var>, stride: usize, dilation: usize) -> Result<Var> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if sx.len() != 3 || sw.len() != 3 || sx[1] != sw[1] || stride == 0 || dilation == 0 {
            return Err(Error::shape("conv1d", format!("input {sx:?}, kernel {sw:?}")));
        }
        if let Some(b) = bias {
            if self.shape(b) != [sw[0]] {
                return Err(Error::shape("conv1d", format!("bias {:?} for {} channels", self.shape(b), sw[0])));
            }
        }
        let (batch, cin, len) = (sx[0], sx[1], sx[2]);
        let (cout, k) = (sw[0], sw[2]);
        let span = dilation * (k - 1) + 1;
        if k == 0 || span > len {
            return Err(Error::shape("conv1d", format!("kernel span {span} exceeds series length {len}")));
        }
        let lout = (len - span) / stride + 1;
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let mut out = vec![0.0; batch * cout * lout];
        let mut cols = vec![0.0; cin * k * lout];
        for b in 0..batch {
            im2col(&xv[b * cin * len..(b + 1) * cin * len], cin, len, k, stride, dilation, lout, &mut cols);
            gemm(cout, cin * k, lout, wv, false, &cols, false, 0.0, &mut out[b * cout * lout..(b + 1) * cout * lout]);
        }
        if let Some(bv) = bias {
            let bv = self.value(bv).data();
            for (i, chunk) in out.chunks_mut(lout).enumerate() {
                let c = bv[i % cout];
                chunk.iter_mut().for_each(|v| *v += c);
            }
        }
        Ok(self.push(
            Tensor::from_parts(vec![batch, cout, lout], out),
            Op::Conv1d { x, w, bias, stride, dilation },
        ))
    }

    // ----------------------------------------------------------------- reductions

    /// Softmax over the last axis. Entries whose `mask` is false get zero
    /// probability; a fully masked row yields zeros.
    pub fn softmax(&mut self, x: Var, mask: Option<Vec<bool>>) -> Result<Var> {
        let t = self.value(x);
        if let Some(m) = &mask {
            if m.len() != t.numel() {
                return Err(Error::shape("softmax", format!("mask {} vs {}", m.len(), t.numel())));
            }
        }
        let d = *t.shape().last().ok_or_else(|| Error::shape("softmax", "scalar input"))?;
        let mut out = vec![0.0; t.numel()];
        if d > 0 {
            for (r, (row, o)) in t.data().chunks(d).zip(out.chunks_mut(d)).enumerate() {
                let keep = |j: usize| mask.as_ref().is_none_or(|m| m[r * d + j]);
                let mx = (0..d).filter(|&j| keep(j)).map(|j| row[j]).fold(f64::NEG_INFINITY, f64::max);
                if mx == f64::NEG_INFINITY {
                    continue;
                }
                let mut s = 0.0;
                for j in 0..d {
                    if keep(j) {
                        o[j] = (row[j] - mx).exp();
                        s += o[j];
                    }
                }
                o.iter_mut().for_each(|v| *v /= s);
            }
        }
        let shape = t.shape().to_vec();
        Ok(self.push(Tensor::from_parts(shape, out), Op::Softmax(x)))
    }

    fn reduce(&self, x: Var, axis: Option<usize>, op: &'static str) -> Result<(Vec<usize>, Vec<f64>)> {
        let t = self.value(x);
        match axis {
            None => Ok((vec![], vec![t.data().iter().sum()])),
            Some(ax) if ax < t.rank() => {
                let (outer, n, inner) = axis_split(t.shape(), ax);
                let mut out = vec![0.0; outer * inner];
                for o in 0..outer {
                    for i in 0..n {
                        let src = &t.data()[(o * n + i) * inner..(o * n + i + 1) * inner];
                        for (d, s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
                let mut shape = t.shape().to_vec();
                shape.remove(ax);
                Ok((shape, out))
            }
            Some(ax) => Err(Error::shape(op, format!("axis {ax} on {:?}", t.shape()))),
        }
    }

    /// Sum over `axis`, or over everything when `None`.
    pub fn sum(&mut self, x: Var, axis: Option<usize>) -> Result<Var> {
        let (shape, data) = self.reduce(x, axis, "sum")?;
        Ok(self.push(Tensor::from_parts(shape, data), Op::Sum { x, axis }))
    }

    pub fn mean(&mut self, x: Var, axis: Option<usize>) -> Result<Var> {
        let (shape, mut data) = self.reduce(x, axis, "mean")?;
        let count = match axis {
            None => self.value(x).numel(),
            Some(ax) => self.shape(x)[ax],
        } as f64;
        if count > 0.0 {
            data.iter_mut().for_each(|v| *v /= count);
        }
        Ok(self.push(Tensor::from_parts(shape, data), Op::Mean { x, axis }))
    }

    // ----------------------------------------------------------------- graph-specific

    /// `D^-1 A` over the trailing two (square) axes, with `1/0 := 0`.
    pub fn degree_normalize(&mut self, a: Var, dir: Degree) -> Result<Var> {
        let t = self.value(a);
        let s = t.shape();
        if s.len() < 2 || s[s.len() - 1] != s[s.len() - 2] {
            return Err(Error::shape("degree_normalize", format!("{s:?} is not square")));
        }
        if t.data().iter().any(|&v| v < 0.0) {
            return Err(Error::invalid("degree_normalize: adjacency has negative entries"));
        }
        let n = s[s.len() - 1];
        let mut out = t.data().to_vec();
        for blk in out.chunks_mut(n * n) {
            let deg = degrees(blk, n, dir);
            for i in 0..n {
                let inv = if deg[i] > 0.0 { 1.0 / deg[i] } else { 0.0 };
                blk[i * n..(i + 1) * n].iter_mut().for_each(|v| *v *= inv);
            }
        }
        let shape = s.to_vec();
        Ok(self.push(Tensor::from_parts(shape, out), Op::DegreeNorm { a, dir }))
    }

    /// Forward value `hard`, gradient routed to `soft`.
    pub fn straight_through(&mut self, hard: Tensor, soft: Var) -> Result<Var> {
        if hard.shape() != self.shape(soft) {
            return Err(Error::shape("straight_through", format!("{:?} vs {:?}", hard.shape(), self.shape(soft))));
        }
        Ok(self.push(hard, Op::StraightThrough { soft }))
    }

    /// Elementwise relaxed Bernoulli sample from probabilities `theta`
    /// (binary Gumbel-softmax). With `hard`, forward values are thresholded
    /// at 0.5 and gradients flow through the relaxed sample.
    pub fn gumbel_bernoulli(&mut self, theta: Var, tau: f64, hard: bool, rng: &mut RngStream) -> Result<Var> {
        if !(tau > 0.0) {
            return Err(Error::invalid(format!("temperature must be positive, got {tau}")));
        }
        let t = self.value(theta);
        if t.data().iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid("gumbel_bernoulli: probabilities outside [0, 1]"));
        }
        let soft: Vec<f64> = t
            .data()
            .iter()
            .map(|&p| {
                // logistic noise = difference of two Gumbel draws
                let u = rng.open01();
                let noise = u.ln() - (1.0 - u).ln();
                if p >= 1.0 {
                    1.0
                } else if p <= 0.0 {
                    0.0
                } else {
                    kernels::sigmoid((p.ln() - (1.0 - p).ln() + noise) / tau)
                }
            })
            .collect();
        let out = if hard {
            soft.iter().map(|&s| if s > 0.5 { 1.0 } else { 0.0 }).collect()
        } else {
            soft.clone()
        };
        let shape = t.shape().to_vec();
        Ok(self.push(Tensor::from_parts(shape, out), Op::GumbelBernoulli { theta, soft, tau }))
    }

    // ----------------------------------------------------------------- losses

    /// Mean of `|pred - target|` over entries whose mask is true; 0 when
    /// every entry is masked out.
    pub fn masked_mae(&mut self, pred: Var, target: &Tensor, mask: &[bool]) -> Result<Var> {
        let p = self.value(pred);
        if p.shape() != target.shape() || mask.len() != p.numel() {
            return Err(Error::shape("masked_mae", format!("pred {:?}, target {:?}", p.shape(), target.shape())));
        }
        let count = mask.iter().filter(|&&m| m).count();
        let total: f64 = p
            .data()
            .iter()
            .zip(target.data())
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|((a, b), _)| (a - b).abs())
            .sum();
        let value = if count > 0 { total / count as f64 } else { 0.0 };
        Ok(self.push(
            Tensor::scalar(value),
            Op::MaskedMae { pred, target: target.data().to_vec(), mask: mask.to_vec(), count },
        ))
    }

    /// Mean binary cross-entropy of probabilities against 0/1 targets over
    /// masked-in entries. Probabilities are clamped to `[1e-7, 1 - 1e-7]`.
    pub fn bce(&mut self, prob: Var, target: &Tensor, mask: &[bool]) -> Result<Var> {
        let p = self.value(prob);
        if p.shape() != target.shape() || mask.len() != p.numel() {
            return Err(Error::shape("bce", format!("prob {:?}, target {:?}", p.shape(), target.shape())));
        }
        let count = mask.iter().filter(|&&m| m).count();
        let mut total = 0.0;
        for ((&q, &y), &m) in p.data().iter().zip(target.data()).zip(mask) {
            if m {
                let q = q.clamp(BCE_EPS, 1.0 - BCE_EPS);
                total -= y * q.ln() + (1.0 - y) * (1.0 - q).ln();
            }
        }
        let value = if count > 0 { total / count as f64 } else { 0.0 };
        Ok(self.push(
            Tensor::scalar(value),
            Op::Bce { prob, target: target.data().to_vec(), mask: mask.to_vec(), count },
        ))
    }

    // ----------------------------------------------------------------- backward

    /// Reverse sweep from a scalar `loss`. Every leaf created with
    /// [`Tape::leaf`] gets a gradient (zeros when unreachable).
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        self.check(loss)?;
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.idx] = Some(Tensor::full(lv.shape().to_vec(), 1.0));
        for idx in (0..=loss.idx).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(node, &g, &mut grads);
            if idx == loss.idx {
                grads[idx] = Some(g);
            }
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) && node.requires_grad && grads[i].is_none() {
                grads[i] = Some(Tensor::zeros(node.value.shape().to_vec()));
            }
        }
        Ok(Gradients { tape: self.id, grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.idx].requires_grad
    }

    fn backprop_node(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let out = &node.value;
        let acc = |grads: &mut [Option<Tensor>], v: Var, t: Tensor| match &mut grads[v.idx] {
            Some(existing) => existing.add_assign(&t),
            slot @ None => *slot = Some(t),
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (k, m) = (tb.shape()[0], tb.shape()[1]);
                let rows = ta.numel() / k.max(1);
                if self.wants(*a) {
                    let mut ga = vec![0.0; rows * k];
                    gemm(rows, m, k, g.data(), false, tb.data(), true, 0.0, &mut ga);
                    acc(grads, *a, Tensor::from_parts(ta.shape().to_vec(), ga));
                }
                if self.wants(*b) {
                    let mut gb = vec![0.0; k * m];
                    gemm(k, rows, m, ta.data(), true, g.data(), false, 0.0, &mut gb);
                    acc(grads, *b, Tensor::from_parts(tb.shape().to_vec(), gb));
                }
            }
            Op::BatchMatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (batch, k, m) = (tb.shape()[0], tb.shape()[1], tb.shape()[2]);
                let shared = ta.rank() == 2;
                let n = ta.shape()[ta.rank() - 2];
                if self.wants(*a) {
                    let mut ga = vec![0.0; ta.numel()];
                    for bi in 0..batch {
                        let gb = &g.data()[bi * n * m..(bi + 1) * n * m];
                        let bb = &tb.data()[bi * k * m..(bi + 1) * k * m];
                        let (dst, beta) = if shared {
                            (&mut ga[..], if bi == 0 { 0.0 } else { 1.0 })
                        } else {
                            (&mut ga[bi * n * k..(bi + 1) * n * k], 0.0)
                        };
                        gemm(n, m, k, gb, false, bb, true, beta, dst);
                    }
                    acc(grads, *a, Tensor::from_parts(ta.shape().to_vec(), ga));
                }
                if self.wants(*b) {
                    let mut gbv = vec![0.0; tb.numel()];
                    for bi in 0..batch {
                        let ab = if shared { ta.data() } else { &ta.data()[bi * n * k..(bi + 1) * n * k] };
                        gemm(
                            k,
                            n,
                            m,
                            ab,
                            true,
                            &g.data()[bi * n * m..(bi + 1) * n * m],
                            false,
                            0.0,
                            &mut gbv[bi * k * m..(bi + 1) * k * m],
                        );
                    }
                    acc(grads, *b, Tensor::from_parts(tb.shape().to_vec(), gbv));
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if self.wants(*a) {
                    acc(grads, *a, reduce_to(g, self.shape(*a), 1.0));
                }
                if self.wants(*b) {
                    acc(grads, *b, reduce_to(g, self.shape(*b), sign));
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let shape = out.shape();
                let expand = |t: &Tensor| -> Vec<f64> {
                    if t.shape() == shape {
                        t.data().to_vec()
                    } else {
                        broadcast_offsets(shape, t.shape()).iter().map(|&o| t.data()[o]).collect()
                    }
                };
                if self.wants(*a) {
                    let eb = expand(tb);
                    let prod = Tensor::from_parts(shape.to_vec(), g.data().iter().zip(&eb).map(|(x, y)| x * y).collect());
                    acc(grads, *a, reduce_to(&prod, ta.shape(), 1.0));
                }
                if self.wants(*b) {
                    let ea = expand(ta);
                    let prod = Tensor::from_parts(shape.to_vec(), g.data().iter().zip(&ea).map(|(x, y)| x * y).collect());
                    acc(grads, *b, reduce_to(&prod, tb.shape(), 1.0));
                }
            }
            Op::Scale(x, s) => acc(grads, *x, g.map(|v| v * s)),
            Op::MulConst { x, factor } => {
                let data = g.data().iter().zip(factor).map(|(a, b)| a * b).collect();
                acc(grads, *x, Tensor::from_parts(g.shape().to_vec(), data));
            }
            Op::Concat { inputs, axis } => {
                let (outer, total, inner) = axis_split(out.shape(), *axis);
                let mut start = 0;
                for &v in inputs {
                    let s = self.shape(v).to_vec();
                    let d = s[*axis];
                    if self.wants(v) {
                        let mut data = Vec::with_capacity(outer * d * inner);
                        for o in 0..outer {
                            let base = (o * total + start) * inner;
                            data.extend_from_slice(&g.data()[base..base + d * inner]);
                        }
                        acc(grads, v, Tensor::from_parts(s, data));
                    }
                    start += d;
                }
            }
            Op::Gather { x, axis, indices } => {
                let s = self.shape(*x).to_vec();
                let (outer, n, inner) = axis_split(&s, *axis);
                let mut gx = vec![0.0; outer * n * inner];
                let m = indices.len();
                for o in 0..outer {
                    for (j, &i) in indices.iter().enumerate() {
                        let src = &g.data()[(o * m + j) * inner..(o * m + j + 1) * inner];
                        let dst = &mut gx[(o * n + i) * inner..(o * n + i + 1) * inner];
                        dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
                    }
                }
                acc(grads, *x, Tensor::from_parts(s, gx));
            }
            Op::Reshape(x) => {
                let s = self.shape(*x).to_vec();
                acc(grads, *x, Tensor::from_parts(s, g.data().to_vec()));
            }
            Op::Permute { x, perm } => {
                let s = self.shape(*x).to_vec();
                let offsets = permute_offsets(&s, perm);
                let mut gx = vec![0.0; g.numel()];
                for (i, &o) in offsets.iter().enumerate() {
                    gx[o] = g.data()[i];
                }
                acc(grads, *x, Tensor::from_parts(s, gx));
            }
            Op::Conv1d { x, w, bias, stride, dilation } => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                let (batch, cin, len) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
                let (cout, k) = (tw.shape()[0], tw.shape()[2]);
                let lout = out.shape()[2];
                let mut gw = vec![0.0; tw.numel()];
                let mut gx = vec![0.0; tx.numel()];
                let mut cols = vec![0.0; cin * k * lout];
                let mut gcols = vec![0.0; cin * k * lout];
                for b in 0..batch {
                    let gb = &g.data()[b * cout * lout..(b + 1) * cout * lout];
                    if self.wants(*w) {
                        im2col(&tx.data()[b * cin * len..(b + 1) * cin * len], cin, len, k, *stride, *dilation, lout, &mut cols);
                        gemm(cout, lout, cin * k, gb, false, &cols, true, 1.0, &mut gw);
                    }
                    if self.wants(*x) {
                        gemm(cin * k, cout, lout, tw.data(), true, gb, false, 0.0, &mut gcols);
                        col2im_add(&gcols, cin, len, k, *stride, *dilation, lout, &mut gx[b * cin * len..(b + 1) * cin * len]);
                    }
                }
                if self.wants(*x) {
                    acc(grads, *x, Tensor::from_parts(tx.shape().to_vec(), gx));
                }
                if self.wants(*w) {
                    acc(grads, *w, Tensor::from_parts(tw.shape().to_vec(), gw));
                }
                if let Some(bv) = bias {
                    if self.wants(*bv) {
                        let mut gbias = vec![0.0; cout];
                        for (i, chunk) in g.data().chunks(lout).enumerate() {
                            gbias[i % cout] += chunk.iter().sum::<f64>();
                        }
                        acc(grads, *bv, Tensor::vector(gbias));
                    }
                }
            }
            Op::Sigmoid(x) => {
                let data = g.data().iter().zip(out.data()).map(|(g, y)| g * y * (1.0 - y)).collect();
                acc(grads, *x, Tensor::from_parts(g.shape().to_vec(), data));
            }
            Op::Tanh(x) => {
                let data = g.data().iter().zip(out.data()).map(|(g, y)| g * (1.0 - y * y)).collect();
                acc(grads, *x, Tensor::from_parts(g.shape().to_vec(), data));
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                let data = g.data().iter().zip(xv).map(|(g, &v)| if v > 0.0 { *g } else { 0.0 }).collect();
                acc(grads, *x, Tensor::from_parts(g.shape().to_vec(), data));
            }
            Op::LeakyRelu(x) => {
                let xv = self.value(*x).data();
                let data = g
                    .data()
                    .iter()
                    .zip(xv)
                    .map(|(g, &v)| if v > 0.0 { *g } else { LEAKY_SLOPE * g })
                    .collect();
                acc(grads, *x, Tensor::from_parts(g.shape().to_vec(), data));
            }
            Op::Softmax(x) => {
                let d = *out.shape().last().unwrap();
                let mut gx = vec![0.0; out.numel()];
                if d > 0 {
                    for ((y, gr), dst) in out.data().chunks(d).zip(g.data().chunks(d)).zip(gx.chunks_mut(d)) {
                        let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..d {
                            dst[j] = y[j] * (gr[j] - dot);
                        }
                    }
                }
                acc(grads, *x, Tensor::from_parts(out.shape().to_vec(), gx));
            }
            Op::Sum { x, axis } | Op::Mean { x, axis } => {
                let s = self.shape(*x).to_vec();
                let scale = if matches!(node.op, Op::Mean { .. }) {
                    let c = match axis {
                        None => s.iter().product::<usize>(),
                        Some(ax) => s[*ax],
                    };
                    if c > 0 { 1.0 / c as f64 } else { 0.0 }
                } else {
                    1.0
                };
                let gx = match axis {
                    None => Tensor::full(s, g.item() * scale),
                    Some(ax) => {
                        let (outer, n, inner) = axis_split(&s, *ax);
                        let mut data = vec![0.0; outer * n * inner];
                        for o in 0..outer {
                            let src = &g.data()[o * inner..(o + 1) * inner];
                            for i in 0..n {
                                data[(o * n + i) * inner..(o * n + i + 1) * inner]
                                    .iter_mut()
                                    .zip(src)
                                    .for_each(|(d, s)| *d = s * scale);
                            }
                        }
                        Tensor::from_parts(s, data)
                    }
                };
                acc(grads, *x, gx);
            }
            Op::DegreeNorm { a, dir } => {
                let ta = self.value(*a);
                let n = *ta.shape().last().unwrap();
                let mut ga = vec![0.0; ta.numel()];
                for ((ablk, yblk), (gblk, dst)) in ta
                    .data()
                    .chunks(n * n)
                    .zip(out.data().chunks(n * n))
                    .zip(g.data().chunks(n * n).zip(ga.chunks_mut(n * n)))
                {
                    let deg = degrees(ablk, n, *dir);
                    let inv: Vec<f64> = deg.iter().map(|&d| if d > 0.0 { 1.0 / d } else { 0.0 }).collect();
                    // s_i = sum_j g_ij y_ij
                    let s: Vec<f64> = (0..n)
                        .map(|i| (0..n).map(|j| gblk[i * n + j] * yblk[i * n + j]).sum())
                        .collect();
                    for p in 0..n {
                        for q in 0..n {
                            let direct = gblk[p * n + q] * inv[p];
                            let via_degree = match dir {
                                Degree::Out => s[p] * inv[p],
                                Degree::In => s[q] * inv[q],
                            };
                            dst[p * n + q] = direct - via_degree;
                        }
                    }
                }
                acc(grads, *a, Tensor::from_parts(ta.shape().to_vec(), ga));
            }
            Op::StraightThrough { soft } => acc(grads, *soft, g.clone()),
            Op::GumbelBernoulli { theta, soft, tau } => {
                let tv = self.value(*theta).data();
                let data = g
                    .data()
                    .iter()
                    .zip(soft)
                    .zip(tv)
                    .map(|((g, &s), &p)| {
                        if p <= 0.0 || p >= 1.0 {
                            0.0
                        } else {
                            g * s * (1.0 - s) / (tau * p * (1.0 - p))
                        }
                    })
                    .collect();
                acc(grads, *theta, Tensor::from_parts(g.shape().to_vec(), data));
            }
            Op::MaskedMae { pred, target, mask, count } => {
                let pv = self.value(*pred);
                let scale = if *count > 0 { g.item() / *count as f64 } else { 0.0 };
                let data = pv
                    .data()
                    .iter()
                    .zip(target)
                    .zip(mask)
                    .map(|((p, t), &m)| {
                        if !m {
                            0.0
                        } else if p > t {
                            scale
                        } else if p < t {
                            -scale
                        } else {
                            0.0
                        }
                    })
                    .collect();
                acc(grads, *pred, Tensor::from_parts(pv.shape().to_vec(), data));
            }
            Op::Bce { prob, target, mask, count } => {
                let pv = self.value(*prob);
                let scale = if *count > 0 { g.item() / *count as f64 } else { 0.0 };
                let data = pv
                    .data()
                    .iter()
                    .zip(target)
                    .zip(mask)
                    .map(|((&q, &y), &m)| {
                        if !m || q < BCE_EPS || q > 1.0 - BCE_EPS {
                            0.0
                        } else {
                            scale * (-y / q + (1.0 - y) / (1.0 - q))
                        }
                    })
                    .collect();
                acc(grads, *prob, Tensor::from_parts(pv.shape().to_vec(), data));
            }
        }
    }

    // ----------------------------------------------------------------- generic dispatch

    /// Applies an op by kind. Convenience entry point mirroring the typed
    /// methods; attributes not used by `kind` are ignored.
    pub fn forward(&mut self, kind: OpKind, inputs: &[Var], attrs: &Attrs) -> Result<Var> {
        let arity = |n: usize| -> Result<()> {
            if inputs.len() < n {
                Err(Error::shape("forward", format!("{kind:?} needs {n} inputs, got {}", inputs.len())))
            } else {
                Ok(())
            }
        };
        match kind {
            OpKind::MatMul => {
                arity(2)?;
                self.matmul(inputs[0], inputs[1])
            }
            OpKind::BatchMatMul => {
                arity(2)?;
                self.bmm(inputs[0], inputs[1])
            }
            OpKind::Add => {
                arity(2)?;
                self.add(inputs[0], inputs[1])
            }
            OpKind::Sub => {
                arity(2)?;
                self.sub(inputs[0], inputs[1])
            }
            OpKind::Mul => {
                arity(2)?;
                self.mul(inputs[0], inputs[1])
            }
            OpKind::Scale => {
                arity(1)?;
                Ok(self.scale(inputs[0], attrs.scale))
            }
            OpKind::Concat => {
                arity(1)?;
                let axis = attrs.axis.unwrap_or(self.shape(inputs[0]).len().saturating_sub(1));
                self.concat(inputs, axis)
            }
            OpKind::Conv1d => {
                arity(2)?;
                self.conv1d(inputs[0], inputs[1], inputs.get(2).copied(), attrs.stride, attrs.dilation)
            }
            OpKind::Sigmoid => {
                arity(1)?;
                Ok(self.sigmoid(inputs[0]))
            }
            OpKind::Tanh => {
                arity(1)?;
                Ok(self.tanh(inputs[0]))
            }
            OpKind::Relu => {
                arity(1)?;
                Ok(self.relu(inputs[0]))
            }
            OpKind::LeakyRelu => {
                arity(1)?;
                Ok(self.leaky_relu(inputs[0]))
            }
            OpKind::Softmax => {
                arity(1)?;
                self.softmax(inputs[0], None)
            }
            OpKind::Sum => {
                arity(1)?;
                self.sum(inputs[0], attrs.axis)
            }
            OpKind::Mean => {
                arity(1)?;
                self.mean(inputs[0], attrs.axis)
            }
            OpKind::Gather => {
                arity(1)?;
                self.gather(inputs[0], attrs.axis.unwrap_or(0), &attrs.indices)
            }
            OpKind::Embedding => {
                arity(1)?;
                self.embedding(inputs[0], &attrs.indices)
            }
        }
    }
}

const BCE_EPS: f64 = 1e-7;

/// Op catalog reachable through [`Tape::forward`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    MatMul,
    BatchMatMul,
    Add,
    Sub,
    Mul,
    Scale,
    Concat,
    Conv1d,
    Sigmoid,
    Tanh,
    Relu,
    LeakyRelu,
    Softmax,
    Sum,
    Mean,
    Gather,
    Embedding,
}

impl FromStr for OpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "matmul" => OpKind::MatMul,
            "bmm" | "batched_matmul" => OpKind::BatchMatMul,
            "add" => OpKind::Add,
            "sub" => OpKind::Sub,
            "mul" => OpKind::Mul,
            "scale" => OpKind::Scale,
            "concat" => OpKind::Concat,
            "conv1d" => OpKind::Conv1d,
            "sigmoid" => OpKind::Sigmoid,
            "tanh" => OpKind::Tanh,
            "relu" => OpKind::Relu,
            "leaky_relu" => OpKind::LeakyRelu,
            "softmax" => OpKind::Softmax,
            "sum" => OpKind::Sum,
            "mean" => OpKind::Mean,
            "gather" => OpKind::Gather,
            "embedding" => OpKind::Embedding,
            other => return Err(Error::UnknownOp(other.to_string())),
        })
    }
}

/// Attributes for [`Tape::forward`].
#[derive(Clone, Debug)]
pub struct Attrs {
    pub axis: Option<usize>,
    pub stride: usize,
    pub dilation: usize,
    pub scale: f64,
    pub indices: Vec<usize>,
}

impl Default for Attrs {
    fn default() -> Self {
        Attrs {
            axis: None,
            stride: 1,
            dilation: 1,
            scale: 1.0,
            indices: Vec::new(),
        }
    }
}

fn degrees(blk: &[f64], n: usize, dir: Degree) -> Vec<f64> {
    match dir {
        Degree::Out => (0..n).map(|i| blk[i * n..(i + 1) * n].iter().sum()).collect(),
        Degree::In => (0..n).map(|j| (0..n).map(|i| blk[i * n + j]).sum()).collect(),
    }
}

/// Sums a broadcast gradient back down to `shape`.
fn reduce_to(g: &Tensor, shape: &[usize], sign: f64) -> Tensor {
    if g.shape() == shape {
        return if sign == 1.0 { g.clone() } else { g.map(|v| v * sign) };
    }
    let offsets = broadcast_offsets(g.shape(), shape);
    let mut out = vec![0.0; shape.iter().product()];
    for (&o, &v) in offsets.iter().zip(g.data()) {
        out[o] += sign * v;
    }
    Tensor::from_parts(shape.to_vec(), out)
}

#[allow(clippy::too_many_arguments)]
fn im2col(x: &[f64], cin: usize, len: usize, k: usize, stride: usize, dilation: usize, lout: usize, cols: &mut [f64]) {
    for c in 0..cin {
        for kk in 0..k {
            let row = &mut cols[(c * k + kk) * lout..(c * k + kk + 1) * lout];
            let base = c * len + kk * dilation;
            for (t, r) in row.iter_mut().enumerate() {
                *r = x[base + t * stride];
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn col2im_add(cols: &[f64], cin: usize, len: usize, k: usize, stride: usize, dilation: usize, lout: usize, gx: &mut [f64]) {
    for c in 0..cin {
        for kk in 0..k {
            let row = &cols[(c * k + kk) * lout..(c * k + kk + 1) * lout];
            let base = c * len + kk * dilation;
            for (t, r) in row.iter().enumerate() {
                gx[base + t * stride] += r;
            }
        }
    }
}
