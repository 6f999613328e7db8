//! Self-contained run directories.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::metrics::{metrics_from_csv, metrics_to_csv, HorizonMae};
use crate::autodiff::{ParamStore, Tensor};
use crate::graph::{AdjacencyMatrix, EdgeScores, GraphSource};
use crate::{Error, Result};

pub const CONFIG_FILE: &str = "config.toml";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SCORES_FILE: &str = "edge_scores.csv";
pub const ADJACENCY_FILE: &str = "adjacency.edges";
pub const PARAMS_FILE: &str = "params.bin";
pub const MANIFEST_FILE: &str = "params.manifest";
pub const SUMMARY_FILE: &str = "record.toml";

/// Everything one training run produced.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub best_val_mae: f64,
    /// Validation MAE after every epoch.
    pub val_history: Vec<f64>,
    /// Test MAE at horizons 3, 6 and 12 on the original scale.
    pub test_mae: Vec<HorizonMae>,
    pub edge_scores: Option<EdgeScores>,
    pub adjacency: Option<AdjacencyMatrix>,
    /// Restored best parameters.
    pub params: ParamStore,
    pub wall_clock_secs: f64,
}

/// Scalar fields of a record, stored as TOML.
#[derive(Debug, Serialize, Deserialize)]
struct Summary {
    seed: u64,
    config_hash: String,
    best_epoch: usize,
    epochs_run: usize,
    best_val_mae: f64,
    wall_clock_secs: f64,
    n: Option<usize>,
    graph_source: Option<String>,
    directed: Option<bool>,
    val_history: Vec<f64>,
}

impl RunRecord {
    pub fn mae_at(&self, horizon: usize) -> Option<f64> {
        self.test_mae.iter().find(|m| m.horizon == horizon).and_then(|m| m.mae)
    }

    /// True when every metric, score and parameter matches bit for bit.
    /// Wall-clock time is ignored.
    pub fn same_outcome(&self, other: &RunRecord) -> bool {
        self.config == other.config
            && self.best_epoch == other.best_epoch
            && self.epochs_run == other.epochs_run
            && self.best_val_mae.to_bits() == other.best_val_mae.to_bits()
            && self.val_history == other.val_history
            && self.test_mae == other.test_mae
            && self.edge_scores == other.edge_scores
            && self.adjacency == other.adjacency
            && self.params.iter().eq(other.params.iter())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, bytes: &[u8]| {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(|e| Error::io(path, e))
        };
        write(CONFIG_FILE, self.config.to_toml()?.as_bytes())?;
        write(METRICS_FILE, metrics_to_csv(&self.test_mae).as_bytes())?;
        if let Some(s) = &self.edge_scores {
            write(SCORES_FILE, s.to_csv().as_bytes())?;
        }
        if let Some(a) = &self.adjacency {
            write(ADJACENCY_FILE, a.to_edge_list().as_bytes())?;
        }
        let (blob, manifest) = encode_params(&self.params);
        write(PARAMS_FILE, &blob)?;
        write(MANIFEST_FILE, manifest.as_bytes())?;
        let summary = Summary {
            seed: self.seed,
            config_hash: self.config.hash()?,
            best_epoch: self.best_epoch,
            epochs_run: self.epochs_run,
            best_val_mae: self.best_val_mae,
            wall_clock_secs: self.wall_clock_secs,
            n: self.adjacency.as_ref().map(AdjacencyMatrix::n),
            graph_source: self.adjacency.as_ref().map(|a| a.source().to_string()),
            directed: self.adjacency.as_ref().map(AdjacencyMatrix::directed),
            val_history: self.val_history.clone(),
        };
        let text = toml::to_string(&summary).map_err(|e| Error::Config(e.to_string()))?;
        write(SUMMARY_FILE, text.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|e| Error::io(path, e))
        };
        let config = ExperimentConfig::from_toml(&read(CONFIG_FILE)?)?;
        let summary: Summary =
            toml::from_str(&read(SUMMARY_FILE)?).map_err(|e| Error::parse(SUMMARY_FILE, e.to_string()))?;
        if summary.config_hash != config.hash()? {
            return Err(Error::parse(SUMMARY_FILE, "config hash does not match config.toml"));
        }
        let model = config.model.as_str();
        let edge_scores = match dir.join(SCORES_FILE).exists() {
            true => Some(EdgeScores::from_csv(&read(SCORES_FILE)?, model, summary.seed)?),
            false => None,
        };
        let adjacency = match (summary.n, &summary.graph_source) {
            (Some(n), Some(src)) => Some(AdjacencyMatrix::from_edge_list(
                &read(ADJACENCY_FILE)?,
                n,
                summary.directed.unwrap_or(true),
                src.parse::<GraphSource>()?,
            )?),
            _ => None,
        };
        let blob_path = dir.join(PARAMS_FILE);
        let blob = fs::read(&blob_path).map_err(|e| Error::io(blob_path, e))?;
        Ok(RunRecord {
            params: decode_params(&blob, &read(MANIFEST_FILE)?)?,
            config,
            seed: summary.seed,
            best_epoch: summary.best_epoch,
            epochs_run: summary.epochs_run,
            best_val_mae: summary.best_val_mae,
            val_history: summary.val_history,
            test_mae: metrics_from_csv(&read(METRICS_FILE)?)?,
            edge_scores,
            adjacency,
            wall_clock_secs: summary.wall_clock_secs,
        })
    }
}

/// Little-endian f64 blob plus a `name [d0,d1,..] offset` manifest, offsets
/// counted in scalars.
pub fn encode_params(store: &ParamStore) -> (Vec<u8>, String) {
    let mut blob = Vec::with_capacity(store.num_scalars() * 8);
    let mut manifest = String::new();
    let mut offset = 0;
    for (name, t) in store.iter() {
        let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        manifest.push_str(&format!("{name} [{}] {offset}\n", dims.join(",")));
        t.data().iter().for_each(|v| blob.extend_from_slice(&v.to_le_bytes()));
        offset += t.numel();
    }
    (blob, manifest)
}

pub fn decode_params(blob: &[u8], manifest: &str) -> Result<ParamStore> {
    let bad = |d: String| Error::parse(MANIFEST_FILE, d);
    if blob.len() % 8 != 0 {
        return Err(bad(format!("blob length {} is not a multiple of 8", blob.len())));
    }
    let values: Vec<f64> = blob.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let mut store = ParamStore::new();
    for line in manifest.lines().filter(|l| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [name, dims, offset] = fields[..] else {
            return Err(bad(format!("expected `name shape offset`, got `{line}`")));
        };
        let shape = dims
            .strip_prefix('[')
            .and_then(|d| d.strip_suffix(']'))
            .ok_or_else(|| bad(format!("shape `{dims}` is not bracketed")))?
            .split(',')
            .filter(|d| !d.is_empty())
            .map(|d| d.parse::<usize>().map_err(|e| bad(format!("{e}"))))
            .collect::<Result<Vec<_>>>()?;
        let offset: usize = offset.parse().map_err(|e| bad(format!("{e}")))?;
        let len: usize = shape.iter().product();
        let data = values
            .get(offset..offset + len)
            .ok_or_else(|| bad(format!("`{name}` runs past the end of the blob")))?;
        store.add(name, Tensor::new(shape, data.to_vec())?);
    }
    Ok(store)
}
