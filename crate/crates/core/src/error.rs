//! Error type shared by every layer of the stack.

use std::io;

use thiserror::Error;

use crate::node::NodeId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes or structural settings of a model, pool or engine are inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// An ablation mask names a node that does not exist or may not be ablated.
    #[error("mask error: {0}")]
    Mask(String),

    /// A call argument is outside its allowed range.
    #[error("argument error: {0}")]
    Argument(String),

    /// Input data is malformed (NaN features, labels out of range, ...).
    #[error("data error: {0}")]
    Data(String),

    /// Every centroid of a k-means member was ablated.
    #[error("total ablation: all {k} centroids of model {model_index} are masked")]
    TotalAblation { model_index: usize, k: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A trace with the same decision id but different content is already stored.
    #[error("integrity error: decision {0} already stored with different content")]
    Integrity(String),

    #[error("exhaustive search budget exceeded: {candidates} candidates (limit {limit})")]
    Budget { candidates: usize, limit: usize },

    /// An internal consistency check failed.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("storage error: {0}")]
    Storage(#[from] io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn foreign_node(node: NodeId, owner: &str) -> Self {
        Error::Mask(format!("node {node} does not belong to {owner}"))
    }
}
