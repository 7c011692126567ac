use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the retrieval pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("no embedding for token {0:?}")]
    MissingEmbedding(String),

    #[error("malformed {what} at line {line}: {reason}")]
    Parse {
        what: &'static str,
        line: usize,
        reason: String,
    },

    #[error("duplicate document id {0:?}")]
    DuplicateDocument(String),

    #[error("corpus has no indexable documents")]
    EmptyCorpus,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("corrupt index file {file}: {reason}")]
    CorruptIndex { file: &'static str, reason: String },

    #[error("index directory {0} already exists (use overwrite to replace it)")]
    IndexExists(PathBuf),

    #[error("topic {query_id:?} has an empty {field}")]
    EmptyTopicField {
        query_id: String,
        field: &'static str,
    },

    #[error("duplicate document {doc_id:?} in run for query {query_id:?}")]
    DuplicateRunEntry { query_id: String, doc_id: String },

    #[error("paired samples differ: {0}")]
    UnpairedSamples(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
