use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Horizons reported for every run.
pub const REPORT_HORIZONS: [usize; 3] = [3, 6, 12];

/// MAE at one horizon; `None` when every target at that step was masked.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonMae {
    pub horizon: usize,
    pub mae: Option<f64>,
}

/// Running masked absolute-error sums per forecast step.
#[derive(Clone, Debug, PartialEq)]
pub struct MaeAccumulator {
    sum: Vec<f64>,
    count: Vec<usize>,
}

impl MaeAccumulator {
    pub fn new(horizon: usize) -> Self {
        MaeAccumulator { sum: vec![0.0; horizon], count: vec![0; horizon] }
    }

    /// Adds `[B, N, H]` predictions and targets, flattened row-major.
    pub fn add(&mut self, pred: &[f64], target: &[f64], mask: &[bool]) -> Result<()> {
        let h = self.sum.len();
        if pred.len() != target.len() || pred.len() != mask.len() || pred.len() % h != 0 {
            return Err(Error::shape("mae", format!("{} predictions, {} targets, {} mask", pred.len(), target.len(), mask.len())));
        }
        for (k, ((p, t), &m)) in pred.iter().zip(target).zip(mask).enumerate() {
            if m {
                self.sum[k % h] += (p - t).abs();
                self.count[k % h] += 1;
            }
        }
        Ok(())
    }

    /// MAE exactly `h` steps ahead (1-based).
    pub fn at(&self, h: usize) -> Option<f64> {
        let i = h.checked_sub(1)?;
        (*self.count.get(i)? > 0).then(|| self.sum[i] / self.count[i] as f64)
    }

    /// MAE over every step.
    pub fn overall(&self) -> Option<f64> {
        let c: usize = self.count.iter().sum();
        (c > 0).then(|| self.sum.iter().sum::<f64>() / c as f64)
    }

    pub fn report(&self, horizons: &[usize]) -> Vec<HorizonMae> {
        horizons.iter().map(|&h| HorizonMae { horizon: h, mae: self.at(h) }).collect()
    }
}

pub fn format_mae(m: Option<f64>) -> String {
    m.map_or_else(|| "undefined".to_string(), |v| v.to_string())
}

/// `horizon,mae` lines with a header; undefined values written as `undefined`.
pub fn metrics_to_csv(rows: &[HorizonMae]) -> String {
    let mut out = String::from("horizon,mae\n");
    for r in rows {
        out.push_str(&format!("{},{}\n", r.horizon, format_mae(r.mae)));
    }
    out
}

pub fn metrics_from_csv(text: &str) -> Result<Vec<HorizonMae>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(str::trim) != Some("horizon,mae") {
        return Err(Error::parse("metrics", "missing `horizon,mae` header"));
    }
    lines
        .map(|l| {
            let (h, m) = l.split_once(',').ok_or_else(|| Error::parse("metrics", format!("bad row `{l}`")))?;
            let horizon = h.trim().parse().map_err(|e| Error::parse("metrics", format!("{e}")))?;
            let mae = match m.trim() {
                "undefined" => None,
                v => Some(v.parse().map_err(|e| Error::parse("metrics", format!("{e}")))?),
            };
            Ok(HorizonMae { horizon, mae })
        })
        .collect()
}
