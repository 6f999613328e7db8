use std::fmt;
use std::hash::Hasher;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::data::{Normalization, Splits};
use crate::graph::GraphSource;
use crate::synthetic::GeneratorConfig;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Gts,
    Mtgnn,
    Gdn,
    Nri,
    Lstm,
    LstmU,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] =
        [ModelKind::Gts, ModelKind::Mtgnn, ModelKind::Gdn, ModelKind::Nri, ModelKind::Lstm, ModelKind::LstmU];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Gts => "gts",
            ModelKind::Mtgnn => "mtgnn",
            ModelKind::Gdn => "gdn",
            ModelKind::Nri => "nri",
            ModelKind::Lstm => "lstm",
            ModelKind::LstmU => "lstm-u",
        }
    }

    pub fn uses_graph(self) -> bool {
        !matches!(self, ModelKind::Lstm | ModelKind::LstmU)
    }

    /// Source tag of the graph this model learns.
    pub fn learned_source(self) -> GraphSource {
        match self {
            ModelKind::Gts => GraphSource::LearnedGts,
            ModelKind::Mtgnn => GraphSource::LearnedMtgnn,
            ModelKind::Gdn => GraphSource::LearnedGdn,
            ModelKind::Nri => GraphSource::LearnedNri,
            ModelKind::Lstm | ModelKind::LstmU => GraphSource::None,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown model '{s}' (expected gts, mtgnn, gdn, nri, lstm or lstm-u)")))
    }
}

/// Where the forecaster's graph comes from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphMode {
    #[default]
    Learned,
    GroundTruth,
    Random,
    None,
}

impl GraphMode {
    pub const ALL: [GraphMode; 4] = [GraphMode::Learned, GraphMode::GroundTruth, GraphMode::Random, GraphMode::None];

    pub fn as_str(self) -> &'static str {
        match self {
            GraphMode::Learned => "learned",
            GraphMode::GroundTruth => "ground-truth",
            GraphMode::Random => "random",
            GraphMode::None => "none",
        }
    }
}

impl fmt::Display for GraphMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GraphMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GraphMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown graph source '{s}' (expected learned, ground-truth, random or none)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Generated(GeneratorConfig),
    Csv { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub source: DataSource,
    pub normalization: Normalization,
    pub window: usize,
    pub mask_zeros: bool,
    pub ground_truth: Option<PathBuf>,
    pub splits: Splits,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            source: DataSource::Generated(GeneratorConfig::Diffusion(Default::default())),
            normalization: Normalization::Zscore,
            window: 20,
            mask_zeros: true,
            ground_truth: None,
            splits: Splits::default(),
        }
    }
}

/// Architecture sizes; every field has a desk-scale default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    pub embed_dim: usize,
    pub dcrnn_hidden: usize,
    pub lstm_hidden: usize,
    pub gdn_dim: usize,
    pub mtgnn_channels: usize,
    pub mtgnn_alpha: f64,
    pub nri_hidden: usize,
    pub edge_types: usize,
    /// Top-K / kNN size; `min(10, N - 1)` when unset.
    pub k: Option<usize>,
    pub temperature: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            embed_dim: 32,
            dcrnn_hidden: 32,
            lstm_hidden: 64,
            gdn_dim: 32,
            mtgnn_channels: 16,
            mtgnn_alpha: 3.0,
            nri_hidden: 32,
            edge_types: 2,
            k: None,
            temperature: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub graph_source: GraphMode,
    pub seed: u64,
    pub horizon: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Weight of the ground-truth cross-entropy prior on the edge
    /// probabilities (GTS only).
    pub gt_reg: f64,
    /// Caps on batches per epoch and on evaluation windows (evenly spaced
    /// subsets); unset means all.
    pub max_batches_per_epoch: Option<usize>,
    pub max_val_windows: Option<usize>,
    pub max_test_windows: Option<usize>,
    pub eval_batch_size: usize,
    pub data: DatasetSpec,
    pub params: ModelParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelKind::Gts,
            graph_source: GraphMode::Learned,
            seed: 0,
            horizon: crate::forecast::HORIZON,
            max_epochs: 200,
            patience: 20,
            batch_size: 32,
            lr: 1e-3,
            gt_reg: 0.0,
            max_batches_per_epoch: None,
            max_val_windows: None,
            max_test_windows: None,
            eval_batch_size: 64,
            data: DatasetSpec::default(),
            params: ModelParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.horizon != crate::forecast::HORIZON {
            return bad(format!("horizon is fixed at {}, got {}", crate::forecast::HORIZON, self.horizon));
        }
        if self.max_epochs == 0 || self.batch_size == 0 || self.eval_batch_size == 0 {
            return bad("max_epochs, batch_size and eval_batch_size must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if !(self.gt_reg >= 0.0) {
            return bad(format!("gt_reg must be nonnegative, got {}", self.gt_reg));
        }
        if self.gt_reg > 0.0 && self.model != ModelKind::Gts {
            return bad("gt_reg applies to the gts model only".into());
        }
        if self.data.window == 0 {
            return bad("window must be positive".into());
        }
        if self.params.edge_types < 2 {
            return bad("edge_types must be at least 2".into());
        }
        if !(self.params.temperature > 0.0) {
            return bad("temperature must be positive".into());
        }
        Ok(())
    }

    /// Batch size after the cap for NRI on larger graphs.
    pub fn effective_batch_size(&self, n: usize) -> usize {
        if self.model == ModelKind::Nri && n > 30 {
            self.batch_size.min(8)
        } else {
            self.batch_size
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Stable 64-bit FNV-1a digest of the serialized config, as hex.
    pub fn hash(&self) -> Result<String> {
        let mut h = fnv::FnvHasher::default();
        h.write(self.to_toml()?.as_bytes());
        Ok(format!("{:016x}", h.finish()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let mut cfg = ExperimentConfig { model: ModelKind::LstmU, graph_source: GraphMode::GroundTruth, ..Default::default() };
        cfg.max_batches_per_epoch = Some(5);
        cfg.data.source = DataSource::Csv { path: "x.csv".into() };
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
        assert_eq!(cfg.hash().unwrap(), ExperimentConfig::from_toml(&text).unwrap().hash().unwrap());
    }

    #[test]
    fn partial_files_use_defaults() {
        let cfg = ExperimentConfig::from_toml(
            "model = \"nri\"\nseed = 3\n[data]\nwindow = 12\n[data.source.generated]\nkind = \"dag\"\nn = 40\n",
        )
        .unwrap();
        assert_eq!(cfg.model, ModelKind::Nri);
        assert_eq!(cfg.data.window, 12);
        assert_eq!(cfg.effective_batch_size(40), 8);
        assert_eq!(cfg.patience, 20);
        match cfg.data.source {
            DataSource::Generated(GeneratorConfig::Dag(d)) => assert_eq!((d.n, d.p), (40, 0.1)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_configs() {
        assert!(ExperimentConfig::from_toml("model = \"transformer\"").is_err());
        assert!(ExperimentConfig::from_toml("lr = -1.0").is_err());
        assert!(ExperimentConfig::from_toml("model = \"lstm\"\ngt_reg = 1.0").is_err());
        assert!(ExperimentConfig::from_toml("horizon = 6").is_err());
        assert!("ground-truth".parse::<GraphMode>().is_ok());
        assert!("lstm-u".parse::<ModelKind>().is_ok());
        assert!("gt".parse::<GraphMode>().is_err());
    }
}
