use std::path::PathBuf;

use thiserror::Error;

use crate::pfi::PfiReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("stale or mismatched cache: {0}")]
    State(String),

    #[error("numeric divergence at epoch {epoch}, batch {batch}: loss = {loss}")]
    Divergence { epoch: usize, batch: usize, loss: f64 },

    /// Every feature had non-positive importance; the report is still available.
    #[error("permutation importance kept no features (base score {})", .0.base_score)]
    EmptyMask(Box<PfiReport>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Io { .. } => 3,
            Error::Parse { .. } | Error::Format(_) | Error::Json(_) => 4,
            Error::Shape(_) | Error::EmptyDataset(_) | Error::Data(_) | Error::State(_) => 5,
            Error::Divergence { .. } => 6,
            Error::EmptyMask(_) => 7,
        }
    }
}
