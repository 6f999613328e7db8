//! Graph-source ablations: the same model trained on learned, ground-truth,
//! random and empty graphs.

use rayon::prelude::*;

use super::config::{ExperimentConfig, GraphMode};
use super::record::RunRecord;
use super::train::{train, Dataset};
use crate::{Error, Result};

/// Relative change of `value` against `reference`, in percent. Negative
/// means `value` is the smaller error.
pub fn percent_change(value: f64, reference: f64) -> f64 {
    100.0 * (value - reference) / reference
}

/// `3.740  +3.27%`
pub fn format_cell(mae: f64, delta: f64) -> String {
    format!("{mae:.3}  {delta:+.2}%")
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub mode: GraphMode,
    /// Mean test MAE@12 over runs with a defined value.
    pub mean_mae: Option<f64>,
    /// Standard error of that mean; `None` for fewer than two runs.
    pub sem: Option<f64>,
    /// Change against the reference row.
    pub delta_pct: Option<f64>,
    pub runs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationTable {
    pub model: String,
    /// Mode the deltas are measured against: `learned` when present,
    /// otherwise the first mode.
    pub reference: GraphMode,
    pub rows: Vec<AblationRow>,
}

pub struct AblationOutcome {
    pub table: AblationTable,
    /// One entry per (mode, repeat) in row order.
    pub runs: Vec<(GraphMode, RunRecord)>,
}

fn mean_sem(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (Some(m), None);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (Some(m), Some((var / n).sqrt()))
}

/// Builds the table from per-mode MAE@12 samples.
pub fn ablation_table(model: &str, samples: &[(GraphMode, Vec<f64>)], runs_per_mode: &[usize]) -> Result<AblationTable> {
    let Some(first) = samples.first() else {
        return Err(Error::invalid("ablation needs at least one mode"));
    };
    let reference = samples.iter().find(|(m, _)| *m == GraphMode::Learned).unwrap_or(first);
    let ref_mean = mean_sem(&reference.1).0;
    let rows = samples
        .iter()
        .zip(runs_per_mode)
        .map(|((mode, v), &runs)| {
            let (mean_mae, sem) = mean_sem(v);
            let delta_pct = match (mean_mae, ref_mean) {
                (Some(m), Some(r)) if r != 0.0 => Some(percent_change(m, r)),
                _ => None,
            };
            AblationRow { mode: *mode, mean_mae, sem, delta_pct, runs }
        })
        .collect();
    Ok(AblationTable { model: model.to_string(), reference: reference.0, rows })
}

/// Trains `repeats` seeds (`base.seed`, `base.seed + 1`, ...) per mode, in
/// parallel, and tabulates MAE@12.
pub fn run_ablation_suite(base: &ExperimentConfig, dataset: &Dataset, modes: &[GraphMode], repeats: usize) -> Result<AblationOutcome> {
    if repeats == 0 || modes.is_empty() {
        return Err(Error::Config("ablation needs at least one mode and one repeat".into()));
    }
    if modes.contains(&GraphMode::GroundTruth) && dataset.ground_truth.is_none() {
        return Err(Error::MissingGroundTruth);
    }
    let jobs: Vec<ExperimentConfig> = modes
        .iter()
        .flat_map(|&mode| {
            (0..repeats as u64).map(move |r| ExperimentConfig { graph_source: mode, seed: base.seed + r, ..base.clone() })
        })
        .collect();
    let records = jobs.par_iter().map(|cfg| train(cfg, dataset)).collect::<Result<Vec<_>>>()?;
    let samples: Vec<(GraphMode, Vec<f64>)> = modes
        .iter()
        .enumerate()
        .map(|(i, &m)| (m, records[i * repeats..(i + 1) * repeats].iter().filter_map(|r| r.mae_at(12)).collect()))
        .collect();
    let table = ablation_table(base.model.as_str(), &samples, &vec![repeats; modes.len()])?;
    let runs = jobs.iter().map(|c| c.graph_source).zip(records).collect();
    Ok(AblationOutcome { table, runs })
}

impl AblationTable {
    pub fn row(&self, mode: GraphMode) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.mode == mode)
    }

    /// Human-readable table, one line per mode.
    pub fn render(&self) -> String {
        let mut out = format!("{:<14}{}\n", "graph", format!("{} MAE@12 (vs {})", self.model, self.reference));
        for r in &self.rows {
            let cell = match (r.mean_mae, r.delta_pct) {
                (Some(m), Some(d)) => format_cell(m, d),
                (Some(m), None) => format!("{m:.3}  undefined"),
                _ => "undefined".to_string(),
            };
            out.push_str(&format!("{:<14}{cell}\n", r.mode.as_str()));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| x.to_string());
        let mut out = String::from("mode,runs,mean_mae12,sem,delta_pct\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{},{}\n", r.mode, r.runs, opt(r.mean_mae), opt(r.sem), opt(r.delta_pct)));
        }
        out
    }
}
