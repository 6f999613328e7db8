//! Experiment runner: data preparation, training, evaluation, ablations,
//! edge-score correlation and run persistence.

pub mod ablation;
pub mod config;
pub mod correlation;
pub mod data;
pub mod metrics;
pub mod model;
pub mod record;
pub mod train;

pub use ablation::{ablation_table, format_cell, percent_change, run_ablation_suite, AblationOutcome, AblationRow, AblationTable};
pub use config::{DataSource, DatasetSpec, ExperimentConfig, GraphMode, ModelKind, ModelParams};
pub use correlation::{correlate_edge_scores, pearson, CorrelationReport, PairCorrelation};
pub use data::{count_windows, load_csv, make_windows, ForecastBatch, Normalization, Normalizer, Splits, WindowSet, WindowedSeries};
pub use metrics::{HorizonMae, MaeAccumulator, REPORT_HORIZONS};
pub use model::{Forward, JointModel};
pub use record::RunRecord;
pub use train::{evaluate, reevaluate, train, Dataset, EarlyStopping};
