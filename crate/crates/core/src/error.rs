use std::path::PathBuf;

use crate::instances::ProblemKind;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("expected a {expected:?} instance, got {found:?}")]
    WrongKind {
        expected: ProblemKind,
        found: ProblemKind,
    },

    #[error("{what} on {n} variables exceeds the cap of {cap}")]
    Resource {
        what: &'static str,
        n: usize,
        cap: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("cannot compute features for {id}: {reason}")]
    Feature { id: String, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("{path}: schema_version {found:?} does not match expected {expected}")]
    Schema {
        path: PathBuf,
        expected: u32,
        found: Option<u64>,
    },

    #[error("{path}:{line}: {source}")]
    Parse {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
