use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("graph is empty after filtering")]
    EmptyGraph,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid flip at index {index}: {msg}")]
    InvalidFlip { index: usize, msg: String },

    #[error("no connected component with at least {target} nodes (largest has {largest})")]
    ComponentTooSmall { target: usize, largest: usize },

    #[error("regression needs at least two non-isolated nodes, got {0}")]
    TooFewPoints(usize),

    #[error("node {node} vanished (degree {degree:.3e} at or below floor)")]
    NodeVanished { node: usize, degree: f64 },

    #[error("no valid move left after {applied} flips")]
    NoValidMove { applied: usize },

    #[error("anomaly-score baseline over the targets is zero")]
    ZeroBaseline,

    #[error("RANSAC found no consensus set with at least two points")]
    NoConsensus,

    #[error("poisoned graph isolates target node {0}")]
    TargetIsolated(usize),

    #[error("no test node predicted anomalous")]
    EmptyTargets,

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    NonFiniteLoss { epoch: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
