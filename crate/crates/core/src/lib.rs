//! Joint latent-graph inference and multivariate time-series forecasting.

pub mod autodiff;
mod error;
pub mod forecast;
pub mod graph;
pub mod harness;
pub mod nn;
pub mod synthetic;

pub use autodiff::{ParamStore, RngStream, Tensor};
pub use error::{Error, Result};
pub use graph::{AdjacencyMatrix, EdgeScores, GraphSource};
pub use harness::{Dataset, ExperimentConfig, GraphMode, ModelKind, RunRecord};
pub use synthetic::{GeneratedDataset, GeneratorConfig};
