use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("shape mismatch at node {node} ({op}): {detail}")]
    NodeShape { node: usize, op: &'static str, detail: String },

    #[error("non-finite value produced by node {node} `{label}` ({op})")]
    NonFinite { node: usize, op: &'static str, label: String },

    #[error("graph error: {0}")]
    Graph(String),

    #[error("backward called before a forward pass")]
    BackwardBeforeForward,

    #[error("missing feed for placeholder `{0}`")]
    MissingFeed(String),

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("batch norm `{0}` used in inference mode before any statistics were recorded")]
    NoRunningStats(String),

    #[error("optimizer step requested before gradients were populated")]
    StepBeforeBackward,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown architecture `{0}`")]
    UnknownArchitecture(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("empty series")]
    EmptySeries,

    #[error("degenerate series: {0}")]
    Degenerate(String),

    #[error("{path}: row {row}: {msg}")]
    Parse { path: PathBuf, row: usize, msg: String },

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("checkpoint is truncated or corrupt: {0}")]
    CheckpointTruncated(String),

    #[error("checkpoint holds `{found}` but `{expected}` was requested")]
    CheckpointConfigMismatch { expected: String, found: String },

    #[error("checkpoint parameter `{name}`: {detail}")]
    CheckpointParam { name: String, detail: String },

    #[error("training diverged at epoch {epoch}: {source}")]
    Diverged {
        epoch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("png encoding failed: {0}")]
    Png(#[from] png::EncodingError),
}

impl Error {
    /// Numerical failures (divergence, NaN/Inf) as opposed to usage or data errors.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite { .. } | Error::Diverged { .. })
    }
}
