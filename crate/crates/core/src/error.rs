use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The line is not valid JSON.
    #[error("line {line}: malformed JSON: {message}")]
    Parse { line: usize, message: String },

    /// Valid JSON that does not match the frame record schema.
    #[error("line {line}: schema error: {message}")]
    Schema { line: usize, message: String },

    /// A value is out of its permitted range (non-finite, zero norm, ...).
    #[error("invalid value: {0}")]
    Value(String),

    /// A structurally valid input violates a gallery or tube invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// Filtering removed every frame of a query tube.
    #[error("empty query: every frame of tube '{0}' was removed")]
    EmptyQuery(String),

    #[error("gallery is empty")]
    EmptyGallery,

    #[error("configuration error: {0}")]
    Config(String),

    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("exhaustive search supports at most {max} frames, got {m}")]
    Size { m: usize, max: usize },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
