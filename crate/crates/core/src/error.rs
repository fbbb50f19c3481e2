use std::path::PathBuf;

use thiserror::Error;

use crate::dsl::Diagnostic;

#[derive(Debug, Error)]
pub enum DominoError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("ingest failed: {0}")]
    Ingest(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Spec(#[from] Diagnostic),
    #[error("graph error: {0}")]
    Graph(String),
    #[error("invalid scenario: {0}")]
    Scenario(String),
}

impl DominoError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DominoError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = DominoError> = std::result::Result<T, E>;
