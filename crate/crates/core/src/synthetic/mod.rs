//! Synthetic benchmarks with known generating graphs.

mod datasets;
mod primitives;


pub use datasets::{
    dag_dataset, diffusion_dataset, series_from_csv, series_to_csv, DagDatasetConfig, DatasetKind,
    DiffusionDatasetConfig, GeneratedDataset, GeneratorConfig, GROUND_TRUTH_FILE, METADATA_FILE, SERIES_FILE,
};
pub use primitives::{ppr_matrix, sample_sinusoid, sbm_sample, transition_matrix, SinusoidParams};
