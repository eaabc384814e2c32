use std::path::PathBuf;

use thiserror::Error;

use crate::numcore::ShapeError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Shape(#[from] ShapeError),

    #[error("connectivity must lie in [0, 1], got {0}")]
    InvalidConnectivity(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("input sequence is empty")]
    EmptySequence,

    #[error("forward trace does not match the network or sequence: {0}")]
    TraceMismatch(String),

    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("empty series")]
    EmptySeries,

    #[error("malformed value {value:?} at row {row}")]
    MalformedRow { row: usize, value: String },

    #[error("degenerate series: standard deviation is zero")]
    DegenerateSeries,

    #[error("series needs at least {needed} values, got {got}")]
    SeriesTooShort { needed: usize, got: usize },

    #[error("window length {window} must be smaller than series length {len}")]
    WindowTooLong { window: usize, len: usize },

    #[error("split infeasible: {0}")]
    InfeasibleSplit(String),

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("corrupt checkpoint field `{field}`: {reason}")]
    CheckpointCorrupt { field: String, reason: String },

    #[error("checkpoint shape mismatch in {field}: expected {expected}, found {found}")]
    CheckpointShape { field: String, expected: String, found: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
