use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header at byte {offset}: {reason}")]
    MalformedHeader { offset: u64, reason: String },

    #[error("dimension/payload mismatch: expected {expected} values, found {found}")]
    PayloadMismatch { expected: u64, found: u64 },

    #[error("parse error at line {line}, column {column}: {reason}")]
    Parse {
        line: usize,
        column: usize,
        reason: String,
    },

    #[error("non-finite value at {location}")]
    NonFinite { location: String },

    #[error("not a binary PGM (P5) image: {path}: {reason}")]
    NotPgm { path: PathBuf, reason: String },

    #[error("image {path} is {found_h}x{found_w}, expected {expected_h}x{expected_w}")]
    ImageSizeMismatch {
        path: PathBuf,
        expected_h: usize,
        expected_w: usize,
        found_h: usize,
        found_w: usize,
    },

    #[error("rank {rank} out of range for a {rows}x{cols} matrix")]
    RankOutOfRange {
        rank: usize,
        rows: usize,
        cols: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("numerical failure at iteration {iteration}: {reason}")]
    Numerical { iteration: usize, reason: String },

    #[error("undefined relative loss: target has zero Frobenius norm")]
    ZeroNormTarget,

    #[error("in sample {index}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(
        "infeasible sparse support: per-row/column cap is zero but {requested} nonzeros requested"
    )]
    InfeasibleSupport { requested: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Re-tags a numerical failure with the iteration (or layer) it occurred in.
    pub(crate) fn at_iteration(self, k: usize) -> Self {
        match self {
            Error::Numerical { reason, .. } => Error::Numerical {
                iteration: k,
                reason,
            },
            other => other,
        }
    }

    pub(crate) fn at_sample(self, index: usize) -> Self {
        Error::Sample {
            index,
            source: Box::new(self),
        }
    }
}
