//! Graph learners: each turns node embeddings or raw series into edge scores
//! and an [`AdjacencyMatrix`].

mod adjacency;
pub mod gdn;
pub mod gts;
pub mod mtgnn;
pub mod nri;
pub mod random;

pub use adjacency::{top_k_per_row, AdjacencyMatrix, EdgeScores, GraphSource};
pub(crate) use adjacency::off_diagonal;
pub use gdn::{cosine_matrix, gdn_knn_adjacency, GdnLearner};
pub use gts::{gts_sample_adjacency, gts_threshold_adjacency, ConvSpec, GtsConfig, GtsLearner};
pub use mtgnn::{mtgnn_adjacency, MtgnnLearner, NodePairEmbeddings};
pub use nri::{nri_adjacency, nri_edge_scores, NriEncoder, PairIndex, NO_EDGE};
pub use random::{er_edge_probability, er_random_graph, expected_degree};

/// Default top-K / kNN size.
pub fn default_k(n: usize) -> usize {
    n.saturating_sub(1).min(10)
}
