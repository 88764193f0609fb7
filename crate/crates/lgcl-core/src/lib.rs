//! Line graph contrastive learning for link prediction.
//!
//! The pipeline: load an undirected graph, split its edges into observed /
//! held-out sets with negative sampling, extract an enclosing subgraph around
//! each target pair, transform it into a line graph, encode both views with
//! small graph convolution networks trained against supervised and
//! cross-scale contrastive objectives, and score held-out pairs with
//! AUC / average precision. Heuristic baselines (Katz, rooted PageRank)
//! and experiment drivers (ablation, robustness, sweeps) are included.
//!
//! Everything is deterministic under a fixed seed.

pub mod autodiff;
pub mod graph;
pub mod linegraph;
pub mod split;
pub mod subgraph;


pub(crate) mod seeds;
pub use graph::{Graph, NodeId};
pub use linegraph::LineGraphView;
pub use split::EdgeSplit;
pub use subgraph::EnclosingSubgraph;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("empty graph: {0}")]
    EmptyGraph(String),
    #[error("node id {id} out of range (num_nodes = {num_nodes})")]
    NodeOutOfRange { id: u32, num_nodes: u32 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("not enough non-edges to sample {requested} negatives (graph has {available})")]
    NotEnoughNonEdges { requested: usize, available: usize },
    #[error("shape mismatch in {op}: left {left:?}, right {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, Error>;
