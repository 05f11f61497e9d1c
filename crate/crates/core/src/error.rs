use std::path::PathBuf;

use thiserror::Error;

use crate::embed::EmbedError;
use crate::generation::ClientError;
use crate::knowledge::ExtractError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("unknown {kind} `{id}`")]
    NotFound { kind: &'static str, id: String },

    #[error("{kind} `{id}` already exists")]
    Duplicate { kind: &'static str, id: String },

    #[error("store is sealed; start a new build phase to modify it")]
    Sealed,

    #[error("store must be sealed before it can be queried")]
    NotSealed,

    #[error("recordings are not comparable: {0}")]
    Incomparable(String),

    #[error("extraction failed for document `{doc_id}`: {source}")]
    Extraction {
        doc_id: String,
        #[source]
        source: ExtractError,
    },

    #[error("embedding failed for {context}: {source}")]
    Embedding {
        context: String,
        #[source]
        source: EmbedError,
    },

    #[error("generation via `{client_id}` failed (context {context_hash}): {source}")]
    Generation {
        client_id: String,
        context_hash: String,
        #[source]
        source: ClientError,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("no store found at {0}; run an ingest command first")]
    StoreMissing(PathBuf),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether retrying the same call may succeed.
    pub fn is_retryable(&self) -> bool {
        match self {
            Error::Extraction { source, .. } => source.is_retryable(),
            Error::Generation { source, .. } => source.is_retryable(),
            _ => false,
        }
    }
}
