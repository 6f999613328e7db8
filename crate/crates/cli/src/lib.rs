//! Command-line front end: data generation, training, re-evaluation,
//! graph-source ablations and edge-score correlation.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use graphcast::harness::{
    correlate_edge_scores, reevaluate, run_ablation_suite, train, DataSource, Dataset, ExperimentConfig, GraphMode,
    RunRecord, REPORT_HORIZONS,
};
use graphcast::synthetic::{DagDatasetConfig, DatasetKind, DiffusionDatasetConfig, GeneratorConfig};
use graphcast::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "graphcast", version, about = "Joint graph learning and multivariate forecasting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset with its ground-truth graph.
    GenerateData {
        #[arg(long, value_parser = ["diffusion", "dag"])]
        kind: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Train one model and write its run directory.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Re-score the test split of a saved run directory.
    Evaluate {
        /// Run directory written by `train`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train every graph source for one model and tabulate MAE@12.
    Ablate {
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Correlate the edge scores of saved runs with each other and the ground truth.
    Correlate {
        /// Run directories written by `train` or `ablate`.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Directory for `correlation.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long = "graph-source")]
    graph_source: Option<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    /// Config file (or defaults) with flag overrides applied.
    fn config(&self) -> graphcast::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(m) = &self.model {
            cfg.model = m.parse()?;
        }
        if let Some(g) = &self.graph_source {
            cfg.graph_source = g.parse()?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Usage and config problems exit 2; everything else that fails exits 1.
fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Parse { .. } | Error::MissingGroundTruth => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

fn write(path: &Path, text: &str) -> graphcast::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })?;
    }
    fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn print_metrics(record: &RunRecord) {
    let cells: Vec<String> = REPORT_HORIZONS
        .iter()
        .map(|&h| format!("MAE@{h} {}", record.mae_at(h).map_or("undefined".into(), |v| format!("{v:.4}"))))
        .collect();
    println!(
        "{} {} seed {}: {} (best epoch {} of {})",
        record.config.model,
        record.config.graph_source,
        record.seed,
        cells.join(", "),
        record.best_epoch,
        record.epochs_run
    );
}

fn generate(kind: Option<&str>, common: &Common) -> graphcast::Result<()> {
    let cfg = common.config()?;
    let mut gen = match cfg.data.source {
        DataSource::Generated(g) => g,
        DataSource::Csv { .. } => GeneratorConfig::Diffusion(DiffusionDatasetConfig::default()),
    };
    if let Some(kind) = kind {
        let kind: DatasetKind = kind.parse().map_err(|e: Error| Error::Config(e.to_string()))?;
        if gen.kind() != kind {
            gen = match kind {
                DatasetKind::Diffusion => GeneratorConfig::Diffusion(DiffusionDatasetConfig::default()),
                DatasetKind::Dag => GeneratorConfig::Dag(DagDatasetConfig::default()),
            };
        }
    }
    if let Some(seed) = common.seed {
        match &mut gen {
            GeneratorConfig::Diffusion(c) => c.seed = seed,
            GeneratorConfig::Dag(c) => c.seed = seed,
        }
    }
    let data = gen.generate()?;
    data.export(&common.out)?;
    println!(
        "wrote {} series of length {} with {} ground-truth edges to {}",
        data.n(),
        data.len(),
        data.ground_truth.edge_count(),
        common.out.display()
    );
    Ok(())
}

fn train_cmd(common: &Common) -> graphcast::Result<()> {
    let cfg = common.config()?;
    let dataset = Dataset::load(&cfg)?;
    let record = train(&cfg, &dataset)?;
    record.save(&common.out)?;
    print_metrics(&record);
    Ok(())
}

fn evaluate(out: &Path) -> graphcast::Result<()> {
    let record = RunRecord::load(out)?;
    let dataset = Dataset::load(&record.config)?;
    let acc = reevaluate(&record, &dataset)?;
    let fresh = RunRecord { test_mae: acc.report(&REPORT_HORIZONS), ..record };
    print_metrics(&fresh);
    Ok(())
}

fn ablate(repeats: usize, common: &Common) -> graphcast::Result<()> {
    let cfg = common.config()?;
    if !cfg.model.uses_graph() {
        return Err(Error::Config(format!("{} does not take a graph", cfg.model)));
    }
    let dataset = Dataset::load(&cfg)?;
    let modes: Vec<GraphMode> = GraphMode::ALL
        .into_iter()
        .filter(|&m| m != GraphMode::GroundTruth || dataset.ground_truth.is_some())
        .collect();
    let outcome = run_ablation_suite(&cfg, &dataset, &modes, repeats)?;
    for (mode, record) in &outcome.runs {
        record.save(&common.out.join(format!("{mode}-seed{}", record.seed)))?;
    }
    write(&common.out.join("ablation.csv"), &outcome.table.to_csv())?;
    print!("{}", outcome.table.render());
    Ok(())
}

fn correlate(runs: &[PathBuf], out: Option<&Path>) -> graphcast::Result<()> {
    let records = runs.iter().map(|d| RunRecord::load(d)).collect::<graphcast::Result<Vec<_>>>()?;
    let scores = records
        .iter()
        .zip(runs)
        .map(|(r, d)| {
            r.edge_scores.clone().ok_or_else(|| Error::Config(format!("{} has no edge scores", d.display())))
        })
        .collect::<graphcast::Result<Vec<_>>>()?;
    let ground_truth = Dataset::load(&records[0].config)?.ground_truth;
    let report = correlate_edge_scores(&scores, ground_truth.as_ref())?;
    let show = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.4}"));
    println!("mean cross-run correlation {}", show(report.mean_cross_run));
    println!("mean ground-truth correlation {}", show(report.mean_ground_truth));
    if let Some(dir) = out {
        write(&dir.join("correlation.csv"), &report.to_csv())?;
    }
    Ok(())
}

/// Parses `args` (program name first) and runs the subcommand; returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::GenerateData { kind, common } => generate(kind.as_deref(), common),
        Command::Train { common } => train_cmd(common),
        Command::Evaluate { out } => evaluate(out),
        Command::Ablate { repeats, common } => ablate(*repeats, common),
        Command::Correlate { runs, out } => correlate(runs, out.as_deref()),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
