//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

use crate::client::ClientError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(String),

    #[error("{0}")]
    Client(#[from] ClientError),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("sample size {requested} exceeds available documents ({available})")]
    SampleTooLarge { requested: usize, available: usize },

    #[error("wordlist at {0} is empty")]
    EmptyWordlist(PathBuf),

    #[error("balanced accuracy undefined: {0}")]
    UndefinedMetric(String),

    #[error("cannot aggregate an empty set of datasets")]
    EmptyAggregate,

    #[error("stage `{stage}` requires `{upstream}` to have run first (missing manifest)")]
    MissingUpstream { stage: String, upstream: String },

    #[error("stage `{stage}` refused: {detail} (use --force to override)")]
    DigestMismatch { stage: String, detail: String },

    #[error("internal invariant breached: {0}")]
    InvariantBreach(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
