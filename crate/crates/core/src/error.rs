use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    /// A loaded document parsed but broke one of the data-model invariants.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// A caller passed inputs outside an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("unknown predictor `{name}` (available: {})", available.join(", "))]
    UnknownPredictor { name: String, available: Vec<String> },

    #[error("predictor `{0}` is already registered")]
    DuplicatePredictor(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
