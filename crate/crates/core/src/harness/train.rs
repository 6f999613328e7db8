//! Mini-batch training with early stopping and original-scale evaluation.

use std::time::Instant;

use rand::seq::SliceRandom;

use super::config::{DataSource, ExperimentConfig};
use super::data::{load_csv, make_windows, WindowedSeries};
use super::metrics::{MaeAccumulator, REPORT_HORIZONS};
use super::model::JointModel;
use super::record::RunRecord;
use crate::autodiff::{streams, AdamState, RngStream, Tape, Tensor};
use crate::graph::{AdjacencyMatrix, GraphSource};
use crate::{Error, Result};

/// A raw `[N, T]` series with its optional ground-truth graph.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub series: Tensor,
    pub ground_truth: Option<AdjacencyMatrix>,
}

impl Dataset {
    /// Generates or loads the series the config points at. An explicit
    /// ground-truth path overrides the generator's graph.
    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        let mut ds = match &cfg.data.source {
            DataSource::Generated(g) => {
                let d = g.generate()?;
                Dataset { series: d.series, ground_truth: Some(d.ground_truth) }
            }
            DataSource::Csv { path } => Dataset { series: load_csv(path)?, ground_truth: None },
        };
        if let Some(path) = &cfg.data.ground_truth {
            let n = ds.series.shape()[0];
            ds.ground_truth = Some(AdjacencyMatrix::read_edge_list(path, Some(n), true, GraphSource::GroundTruth)?);
        }
        Ok(ds)
    }

    pub fn windows(&self, cfg: &ExperimentConfig) -> Result<WindowedSeries> {
        let d = &cfg.data;
        make_windows(&self.series, d.window, cfg.horizon, d.splits, d.normalization, d.mask_zeros)
    }
}

/// Patience-based stopping on a score where lower is better.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub best_epoch: usize,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping { patience, best: f64::INFINITY, best_epoch: 0, stale: 0 }
    }

    /// Records one epoch's score; returns true when it is a new best.
    pub fn observe(&mut self, epoch: usize, score: f64) -> bool {
        if score < self.best {
            self.best = score;
            self.best_epoch = epoch;
            self.stale = 0;
            true
        } else {
            self.stale += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.stale >= self.patience
    }
}

/// Evenly spaced subset of at most `cap` items, order preserved.
fn thin(starts: &[usize], cap: Option<usize>) -> Vec<usize> {
    match cap {
        Some(c) if c < starts.len() => (0..c).map(|k| starts[k * starts.len() / c]).collect(),
        _ => starts.to_vec(),
    }
}

/// Original-scale masked MAE of `model` over the given window starts.
pub fn evaluate(model: &JointModel, data: &WindowedSeries, starts: &[usize], batch_size: usize) -> Result<MaeAccumulator> {
    let mut acc = MaeAccumulator::new(data.horizon);
    let (n, h) = (data.n(), data.horizon);
    let mut rng = RngStream::with_stream(0, streams::SAMPLING);
    for chunk in starts.chunks(batch_size.max(1)) {
        let batch = data.batch(chunk, false);
        let mut tape = Tape::new();
        let p = model.store.bind(&mut tape);
        let x = tape.constant(batch.inputs);
        let out = model.forward(&mut tape, &p, x, false, &mut rng)?;
        let pred: Vec<f64> = tape
            .value(out.pred)
            .data()
            .iter()
            .enumerate()
            .map(|(k, &v)| data.normalizer.invert((k / h) % n, v))
            .collect();
        acc.add(&pred, batch.targets.data(), &batch.mask)?;
    }
    Ok(acc)
}

/// Trains one run end to end and evaluates the restored best parameters.
pub fn train(cfg: &ExperimentConfig, dataset: &Dataset) -> Result<RunRecord> {
    cfg.validate()?;
    let clock = Instant::now();
    let data = dataset.windows(cfg)?;
    if data.train.is_empty() {
        return Err(Error::Config("training split has no complete windows".into()));
    }
    let mut model = JointModel::new(cfg, &data, dataset.ground_truth.as_ref())?;
    // tiny series may leave the validation split without a full window;
    // early stopping then tracks the training windows instead
    let val_starts = thin(if data.val.is_empty() { &data.train.starts } else { &data.val.starts }, cfg.max_val_windows);
    let gt_target = match (cfg.gt_reg > 0.0, &dataset.ground_truth) {
        (false, _) => None,
        (true, None) => return Err(Error::MissingGroundTruth),
        (true, Some(g)) => Some(g.weights().iter().map(|&w| if w > 0.0 { 1.0 } else { 0.0 }).collect::<Vec<_>>()),
    };
    let n = data.n();
    let off_diag: Vec<bool> = (0..n * n).map(|k| k / n != k % n).collect();
    let batch_size = cfg.effective_batch_size(n);

    let mut shuffle = RngStream::with_stream(cfg.seed, streams::SHUFFLE);
    let mut sampling = RngStream::with_stream(cfg.seed, streams::SAMPLING);
    let mut adam = AdamState::new(&model.store, cfg.lr);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = model.store.clone();
    let mut val_history = Vec::new();
    let mut order = data.train.starts.clone();

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut shuffle);
        let batches = order.chunks(batch_size).take(cfg.max_batches_per_epoch.unwrap_or(usize::MAX));
        for (bi, chunk) in batches.enumerate() {
            let batch = data.batch(chunk, true);
            if !batch.mask.iter().any(|&m| m) {
                continue;
            }
            let mut tape = Tape::new();
            let p = model.store.bind(&mut tape);
            let x = tape.constant(batch.inputs);
            let out = model.forward(&mut tape, &p, x, true, &mut sampling)?;
            let mut loss = tape.masked_mae(out.pred, &batch.targets, &batch.mask)?;
            if let (Some(theta), Some(target)) = (out.theta, &gt_target) {
                let prior = tape.bce(theta, &Tensor::new([n, n], target.clone())?, &off_diag)?;
                let reg = tape.scale(prior, cfg.gt_reg);
                loss = tape.add(loss, reg)?;
            }
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: bi, value });
            }
            let mut grads = tape.backward(loss)?;
            let g: Vec<Tensor> = p
                .vars()
                .iter()
                .zip(model.store.tensors())
                .map(|(&v, t)| grads.take(v).unwrap_or_else(|| Tensor::zeros(t.shape().to_vec())))
                .collect();
            adam.step(&mut model.store, &g)?;
        }
        let val = evaluate(&model, &data, &val_starts, cfg.eval_batch_size)?
            .overall()
            .ok_or_else(|| Error::invalid("every validation target is masked"))?;
        val_history.push(val);
        if stopper.observe(epoch, val) {
            best.clone_from(&model.store);
        }
        if stopper.should_stop() {
            break;
        }
    }
    model.store.copy_from(&best)?;

    let test = evaluate(&model, &data, &thin(&data.test.starts, cfg.max_test_windows), cfg.eval_batch_size)?;
    let graph = model.graph(Some(&data.batch(&val_starts, true).inputs))?;
    let (edge_scores, adjacency) = graph.map_or((None, None), |(s, a)| (Some(s), Some(a)));
    Ok(RunRecord {
        config: cfg.clone(),
        seed: cfg.seed,
        best_epoch: stopper.best_epoch,
        epochs_run: val_history.len(),
        best_val_mae: stopper.best,
        val_history,
        test_mae: test.report(&REPORT_HORIZONS),
        edge_scores,
        adjacency,
        params: model.store,
        wall_clock_secs: clock.elapsed().as_secs_f64(),
    })
}

/// Rebuilds the model from a record and re-scores the test split.
pub fn reevaluate(record: &RunRecord, dataset: &Dataset) -> Result<MaeAccumulator> {
    let cfg = &record.config;
    let data = dataset.windows(cfg)?;
    let mut model = JointModel::new(cfg, &data, dataset.ground_truth.as_ref())?;
    model.store.copy_from(&record.params)?;
    evaluate(&model, &data, &thin(&data.test.starts, cfg.max_test_windows), cfg.eval_batch_size)
}
