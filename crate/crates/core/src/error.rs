use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate id {id} at line {line}")]
    DuplicateId { id: String, line: usize },

    #[error("invalid label code {0:?}")]
    InvalidLabel(String),

    #[error("vocabulary empty after filtering")]
    EmptyVocabulary,

    #[error("term streams disagree on doc_id: {expected} vs {found}")]
    DocIdMismatch { expected: String, found: String },

    #[error("unknown meta-label {0}")]
    UnknownMetaLabel(String),

    #[error("run key sets differ; symmetric difference: {}", .0.join(", "))]
    KeyMismatch(Vec<String>),

    #[error("predicted document {0} is not present in gold")]
    UnknownDocument(String),

    #[error("missing external stream files for: {}", .0.join(", "))]
    MissingStreams(Vec<String>),

    #[error("index file: {0}")]
    IndexFormat(String),

    #[error("recipe: {0}")]
    Recipe(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Recipe(_) | Error::MissingStreams(_) => 3,
            Error::Invariant(_) => 4,
            _ => 2,
        }
    }
}
