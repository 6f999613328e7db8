use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use super::primitives::{ppr_matrix, sample_sinusoid, sbm_sample, SinusoidParams};
use crate::autodiff::{streams, RngStream, Tensor};
use crate::graph::{AdjacencyMatrix, GraphSource};
use crate::{Error, Result};

pub const SERIES_FILE: &str = "series.csv";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.edges";
pub const METADATA_FILE: &str = "metadata.toml";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Diffusion,
    Dag,
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::Diffusion => "diffusion",
            DatasetKind::Dag => "dag",
        })
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diffusion" => Ok(DatasetKind::Diffusion),
            "dag" => Ok(DatasetKind::Dag),
            other => Err(Error::invalid(format!("unknown dataset kind '{other}' (expected diffusion or dag)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiffusionDatasetConfig {
    pub n: usize,
    pub t: usize,
    pub clusters: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub restart: f64,
    pub alpha: f64,
    pub lag: usize,
    pub noise: f64,
    pub seed: u64,
    /// Seed of the block-model graph; defaults to `seed`.
    pub graph_seed: Option<u64>,
}

impl Default for DiffusionDatasetConfig {
    fn default() -> Self {
        DiffusionDatasetConfig {
            n: 100,
            t: 10_000,
            clusters: 5,
            p_in: 0.5,
            p_out: 0.05,
            restart: 0.15,
            alpha: 0.75,
            lag: 10,
            noise: 0.1,
            seed: 0,
            graph_seed: None,
        }
    }
}

impl DiffusionDatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.restart > 0.0 && self.restart < 1.0) {
            return Err(Error::Config(format!("restart must lie in (0, 1), got {}", self.restart)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.lag >= self.t {
            return Err(Error::Config(format!("lag {} must be shorter than the series ({})", self.lag, self.t)));
        }
        if !(self.noise >= 0.0) {
            return Err(Error::Config(format!("noise must be nonnegative, got {}", self.noise)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DagDatasetConfig {
    pub n: usize,
    pub t: usize,
    pub p: f64,
    /// Parent series lag, drawn uniformly from `0..=max_shift` steps.
    pub max_shift: usize,
    pub stretch: (f64, f64),
    pub vertical: (f64, f64),
    pub noise: f64,
    pub seed: u64,
}

impl Default for DagDatasetConfig {
    fn default() -> Self {
        DagDatasetConfig {
            n: 100,
            t: 10_000,
            p: 0.1,
            max_shift: 5,
            stretch: (0.8, 1.25),
            vertical: (-0.5, 0.5),
            noise: 0.1,
            seed: 0,
        }
    }
}

impl DagDatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::Config(format!("edge probability must lie in [0, 1], got {}", self.p)));
        }
        if !(self.stretch.0 > 0.0 && self.stretch.0 <= self.stretch.1) || self.vertical.0 > self.vertical.1 {
            return Err(Error::Config("stretch and vertical ranges must be ordered, stretch positive".into()));
        }
        if !(self.noise >= 0.0) {
            return Err(Error::Config(format!("noise must be nonnegative, got {}", self.noise)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GeneratorConfig {
    Diffusion(DiffusionDatasetConfig),
    Dag(DagDatasetConfig),
}

impl GeneratorConfig {
    pub fn kind(&self) -> DatasetKind {
        match self {
            GeneratorConfig::Diffusion(_) => DatasetKind::Diffusion,
            GeneratorConfig::Dag(_) => DatasetKind::Dag,
        }
    }

    pub fn generate(&self) -> Result<GeneratedDataset> {
        match self {
            GeneratorConfig::Diffusion(c) => diffusion_dataset(c),
            GeneratorConfig::Dag(c) => dag_dataset(c),
        }
    }
}

/// Series `[N, T]` together with the graph that generated them.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedDataset {
    pub series: Tensor,
    pub ground_truth: AdjacencyMatrix,
    pub config: GeneratorConfig,
}

impl GeneratedDataset {
    pub fn n(&self) -> usize {
        self.series.shape()[0]
    }

    pub fn len(&self) -> usize {
        self.series.shape()[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes the series CSV, ground-truth edge list and metadata into `dir`.
    pub fn export(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let series = dir.join(SERIES_FILE);
        fs::write(&series, series_to_csv(&self.series)).map_err(|e| Error::io(&series, e))?;
        self.ground_truth.write_edge_list(&dir.join(GROUND_TRUTH_FILE))?;
        let meta = dir.join(METADATA_FILE);
        let text = toml::to_string(&self.config).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(&meta, text).map_err(|e| Error::io(&meta, e))
    }

    /// Reads a directory written by [`GeneratedDataset::export`].
    pub fn import(dir: &Path) -> Result<Self> {
        let series_path = dir.join(SERIES_FILE);
        let text = fs::read_to_string(&series_path).map_err(|e| Error::io(&series_path, e))?;
        let series = series_from_csv(&text)?;
        let meta = dir.join(METADATA_FILE);
        let meta_text = fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
        let config: GeneratorConfig = toml::from_str(&meta_text).map_err(|e| Error::parse(METADATA_FILE, e.to_string()))?;
        let directed = config.kind() == DatasetKind::Dag;
        let n = series.shape()[0];
        let ground_truth =
            AdjacencyMatrix::read_edge_list(&dir.join(GROUND_TRUTH_FILE), Some(n), directed, GraphSource::GroundTruth)?;
        Ok(GeneratedDataset { series, ground_truth, config })
    }
}

/// Rows are timesteps, columns are nodes, header `node_0,node_1,...`.
pub fn series_to_csv(series: &Tensor) -> String {
    let (n, t) = (series.shape()[0], series.shape()[1]);
    let mut out = (0..n).map(|i| format!("node_{i}")).collect::<Vec<_>>().join(",");
    out.push('\n');
    for step in 0..t {
        let row: Vec<String> = (0..n).map(|i| format!("{:?}", series.data()[i * t + step])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Parses a headered series CSV into `[N, T]`.
pub fn series_from_csv(text: &str) -> Result<Tensor> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::parse("series csv", "empty file"))?;
    let n = header.split(',').count();
    if n < 2 {
        return Err(Error::parse("series csv", format!("need at least 2 node columns, found {n}")));
    }
    let mut columns = vec![Vec::new(); n];
    for (r, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != n {
            return Err(Error::parse("series csv", format!("row {} has {} cells, expected {n}", r + 1, cells.len())));
        }
        for (c, cell) in cells.iter().enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| Error::parse("series csv", format!("row {}, column {c}: '{cell}' is not a number", r + 1)))?;
            columns[c].push(v);
        }
    }
    let t = columns[0].len();
    if t == 0 {
        return Err(Error::parse("series csv", "no data rows"));
    }
    Tensor::new([n, t], columns.concat())
}

fn normal(rng: &mut RngStream) -> f64 {
    StandardNormal.sample(rng)
}

/// Sinusoids diffused over a block-model graph with personalized PageRank and
/// mixed back in with a lag.
pub fn diffusion_dataset(cfg: &DiffusionDatasetConfig) -> Result<GeneratedDataset> {
    cfg.validate()?;
    let (n, t) = (cfg.n, cfg.t);
    let mut data_rng = RngStream::with_stream(cfg.seed, streams::DATA);
    let mut graph_rng = RngStream::with_stream(cfg.graph_seed.unwrap_or(cfg.seed), streams::GRAPH);
    let mut noise_rng = RngStream::with_stream(cfg.seed, streams::SAMPLING);

    let raw: Vec<Vec<f64>> = (0..n).map(|_| sample_sinusoid(&SinusoidParams::sample(&mut data_rng), t)).collect();
    let (graph, _) = sbm_sample(n, cfg.clusters, cfg.p_in, cfg.p_out, &mut graph_rng)?;
    let s = ppr_matrix(&graph, cfg.restart)?;

    // Each receiving node sees its own noise-free series plus independently
    // perturbed copies of the others: sum_j S_ij (z_j + e_ij). The noise part
    // collapses to one Gaussian with std noise * ||S_i, j != i||.
    let mut diffused = vec![vec![0.0; t]; n];
    for i in 0..n {
        let row = &s.data()[i * n..(i + 1) * n];
        let noise_sd = cfg.noise * row.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, w)| w * w).sum::<f64>().sqrt();
        for (j, &w) in row.iter().enumerate() {
            if w != 0.0 {
                diffused[i].iter_mut().zip(&raw[j]).for_each(|(d, z)| *d += w * z);
            }
        }
        if noise_sd > 0.0 {
            diffused[i].iter_mut().for_each(|d| *d += noise_sd * normal(&mut noise_rng));
        }
    }

    let mut series = Vec::with_capacity(n * t);
    for i in 0..n {
        series.extend((0..t).map(|step| {
            if step < cfg.lag {
                raw[i][step]
            } else {
                cfg.alpha * raw[i][step] + (1.0 - cfg.alpha) * diffused[i][step - cfg.lag]
            }
        }));
    }
    Ok(GeneratedDataset {
        series: Tensor::new([n, t], series)?,
        ground_truth: graph,
        config: GeneratorConfig::Diffusion(cfg.clone()),
    })
}

/// Random DAG over the topological order `0..N`; children are convex
/// combinations of lagged, stretched and offset parent series.
pub fn dag_dataset(cfg: &DagDatasetConfig) -> Result<GeneratedDataset> {
    cfg.validate()?;
    let (n, t) = (cfg.n, cfg.t);
    let mut graph_rng = RngStream::with_stream(cfg.seed, streams::GRAPH);
    let mut data_rng = RngStream::with_stream(cfg.seed, streams::DATA);
    let mut noise_rng = RngStream::with_stream(cfg.seed, streams::SAMPLING);

    let mut weights = vec![0.0; n * n];
    let mut series: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let parents: Vec<usize> = (0..i).filter(|_| graph_rng.open01() < cfg.p).collect();
        let mut s = if parents.is_empty() {
            sample_sinusoid(&SinusoidParams::sample(&mut data_rng), t)
        } else {
            let raw: Vec<f64> = parents.iter().map(|_| Exp1.sample(&mut data_rng)).collect();
            let total: f64 = raw.iter().sum();
            let mut s = vec![0.0; t];
            for (&j, &r) in parents.iter().zip(&raw) {
                let mix = r / total;
                let shift = data_rng.random_range(0..=cfg.max_shift);
                let stretch = sample_range(&mut data_rng, cfg.stretch);
                let vertical = sample_range(&mut data_rng, cfg.vertical);
                for (step, v) in s.iter_mut().enumerate() {
                    let src = series[j][step.saturating_sub(shift)];
                    *v += mix * (stretch * src + vertical);
                }
                weights[i * n + j] = 1.0;
            }
            s
        };
        if cfg.noise > 0.0 {
            s.iter_mut().for_each(|v| *v += cfg.noise * normal(&mut noise_rng));
        }
        series.push(s);
    }
    Ok(GeneratedDataset {
        series: Tensor::new([n, t], series.concat())?,
        ground_truth: AdjacencyMatrix::new(n, weights, true, GraphSource::GroundTruth)?,
        config: GeneratorConfig::Dag(cfg.clone()),
    })
}

fn sample_range(rng: &mut RngStream, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}
