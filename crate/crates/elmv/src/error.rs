use thiserror::Error;

/// Errors produced by the elmv library.
#[derive(Debug, Error)]
pub enum ElmvError {
    /// A file could not be read or written.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Input data violated the on-disk format.
    #[error("parse error: {0}")]
    Parse(String),

    /// An argument violated an operation's preconditions.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Dataset shape or content makes the requested operation impossible.
    #[error("invalid data: {0}")]
    Data(String),

    /// No submatrix survived the missing-rate cap.
    #[error("no qualified subsets at cap {cap}: raise the cap to admit subsets with higher missing rates")]
    NoQualifiedSubsets { cap: f64 },

    /// The exhaustive search guard was exceeded.
    #[error("exhaustive search refused: {0}")]
    Refusal(String),
}

pub type Result<T> = std::result::Result<T, ElmvError>;

impl ElmvError {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        ElmvError::Io {
            path: path.into(),
            source,
        }
    }
}
