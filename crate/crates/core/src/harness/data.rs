//! Normalization, chronological splits and sliding windows.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::synthetic::series_from_csv;
use crate::{Error, Result};

/// Loads a headered series CSV (`node_0,node_1,...`) as `[N, T]`.
pub fn load_csv(path: &Path) -> Result<Tensor> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    series_from_csv(&text)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    #[default]
    Zscore,
    Minmax01,
}

/// Per-node affine map `x -> (x - center) / scale`.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    pub kind: Normalization,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalizer {
    /// Statistics over the first `train_len` steps of each node. Degenerate
    /// nodes (zero spread) get scale 1.
    pub fn fit(series: &Tensor, train_len: usize, kind: Normalization) -> Result<Self> {
        let (n, t) = dims(series)?;
        if train_len == 0 || train_len > t {
            return Err(Error::invalid(format!("training span {train_len} outside 1..={t}")));
        }
        let mut center = Vec::with_capacity(n);
        let mut scale = Vec::with_capacity(n);
        for row in series.rows() {
            let x = &row[..train_len];
            let (c, s) = match kind {
                Normalization::Zscore => {
                    let mean = x.iter().sum::<f64>() / x.len() as f64;
                    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64;
                    (mean, var.sqrt())
                }
                Normalization::Minmax01 => {
                    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    (lo, hi - lo)
                }
            };
            center.push(c);
            scale.push(if s > 0.0 { s } else { 1.0 });
        }
        Ok(Normalizer { kind, center, scale })
    }

    pub fn normalize(&self, series: &Tensor) -> Result<Tensor> {
        self.map_rows(series, |v, c, s| (v - c) / s)
    }

    pub fn denormalize(&self, series: &Tensor) -> Result<Tensor> {
        self.map_rows(series, |v, c, s| v * s + c)
    }

    /// Inverse map for one value of node `i`.
    pub fn invert(&self, i: usize, v: f64) -> f64 {
        v * self.scale[i] + self.center[i]
    }

    pub fn apply(&self, i: usize, v: f64) -> f64 {
        (v - self.center[i]) / self.scale[i]
    }

    fn map_rows(&self, series: &Tensor, f: impl Fn(f64, f64, f64) -> f64) -> Result<Tensor> {
        let (n, t) = dims(series)?;
        if n != self.center.len() {
            return Err(Error::shape("normalizer", format!("{n} nodes, fitted on {}", self.center.len())));
        }
        let data = series
            .data()
            .iter()
            .enumerate()
            .map(|(k, &v)| f(v, self.center[k / t], self.scale[k / t]))
            .collect();
        Tensor::new([n, t], data)
    }
}

fn dims(series: &Tensor) -> Result<(usize, usize)> {
    match series.shape() {
        [n, t] => Ok((*n, *t)),
        s => Err(Error::shape("series", format!("expected [N, T], got {s:?}"))),
    }
}

/// Chronological fractions; the test split takes the remainder.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub train: f64,
    pub val: f64,
}

impl Default for Splits {
    fn default() -> Self {
        Splits { train: 0.7, val: 0.1 }
    }
}

impl Splits {
    /// `(train_end, val_end)` step indices.
    pub fn boundaries(&self, t: usize) -> Result<(usize, usize)> {
        if !(self.train > 0.0 && self.val >= 0.0 && self.train + self.val <= 1.0) {
            return Err(Error::Config(format!("invalid split fractions {} / {}", self.train, self.val)));
        }
        // the nudge keeps 0.8 * 1000 from flooring to 799
        let cut = |f: f64| (f * t as f64 + 1e-9).floor() as usize;
        let train_end = cut(self.train);
        let val_end = cut(self.train + self.val);
        Ok((train_end, val_end.min(t)))
    }
}

/// Number of stride-1 windows of input `w` and horizon `h` in `len` steps.
pub fn count_windows(len: usize, w: usize, h: usize) -> usize {
    (len + 1).saturating_sub(w + h)
}

/// Input windows `[B, N, w]`, targets `[B, N, h]` and the target mask.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastBatch {
    pub inputs: Tensor,
    pub targets: Tensor,
    pub mask: Vec<bool>,
}

impl ForecastBatch {
    pub fn len(&self) -> usize {
        self.inputs.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Window start positions inside one split; batches are cut on demand.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSet {
    pub starts: Vec<usize>,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }
}

/// Normalized and raw series plus the train/val/test windows.
#[derive(Clone, Debug)]
pub struct WindowedSeries {
    pub normalized: Tensor,
    pub raw: Tensor,
    pub normalizer: Normalizer,
    pub window: usize,
    pub horizon: usize,
    pub mask_zeros: bool,
    pub train_end: usize,
    pub train: WindowSet,
    pub val: WindowSet,
    pub test: WindowSet,
}

/// Splits the series chronologically, fits the normalizer on the training
/// span and enumerates windows that stay inside their split.
pub fn make_windows(
    raw: &Tensor,
    window: usize,
    horizon: usize,
    splits: Splits,
    normalization: Normalization,
    mask_zeros: bool,
) -> Result<WindowedSeries> {
    let (_, t) = dims(raw)?;
    if window == 0 || horizon == 0 {
        return Err(Error::invalid("window and horizon must be positive"));
    }
    if t < window + horizon {
        return Err(Error::invalid(format!("series of length {t} too short for window {window} + horizon {horizon}")));
    }
    let (train_end, val_end) = splits.boundaries(t)?;
    let span = |lo: usize, hi: usize| WindowSet {
        starts: (lo..lo + count_windows(hi.saturating_sub(lo), window, horizon)).collect(),
    };
    let normalizer = Normalizer::fit(raw, train_end.max(1), normalization)?;
    Ok(WindowedSeries {
        normalized: normalizer.normalize(raw)?,
        raw: raw.clone(),
        normalizer,
        window,
        horizon,
        mask_zeros,
        train_end,
        train: span(0, train_end),
        val: span(train_end, val_end),
        test: span(val_end, t),
    })
}

impl WindowedSeries {
    pub fn n(&self) -> usize {
        self.raw.shape()[0]
    }

    pub fn len(&self) -> usize {
        self.raw.shape()[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Normalized training span `[N, train_end]`.
    pub fn train_series(&self) -> Tensor {
        let (n, t) = (self.n(), self.len());
        let data = (0..n).flat_map(|i| self.normalized.data()[i * t..i * t + self.train_end].iter().copied()).collect();
        Tensor::from_parts(vec![n, self.train_end], data)
    }

    /// Batch of the given window starts. Targets are on the normalized scale
    /// when `normalized` is true, otherwise raw.
    pub fn batch(&self, starts: &[usize], normalized: bool) -> ForecastBatch {
        let (n, t, w, h) = (self.n(), self.len(), self.window, self.horizon);
        let b = starts.len();
        let src = if normalized { &self.normalized } else { &self.raw };
        let mut inputs = Vec::with_capacity(b * n * w);
        let mut targets = Vec::with_capacity(b * n * h);
        let mut mask = Vec::with_capacity(b * n * h);
        for &s in starts {
            for i in 0..n {
                let row = i * t;
                inputs.extend_from_slice(&self.normalized.data()[row + s..row + s + w]);
                targets.extend_from_slice(&src.data()[row + s + w..row + s + w + h]);
                mask.extend(
                    self.raw.data()[row + s + w..row + s + w + h]
                        .iter()
                        .map(|&v| !(self.mask_zeros && v == 0.0)),
                );
            }
        }
        ForecastBatch {
            inputs: Tensor::from_parts(vec![b, n, w], inputs),
            targets: Tensor::from_parts(vec![b, n, h], targets),
            mask,
        }
    }
}
