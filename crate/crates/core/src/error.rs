use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{quantity} undefined for s = {s} (requires {range})")]
    OutOfRange {
        quantity: &'static str,
        s: f64,
        range: &'static str,
    },

    #[error("dimension {requested} exceeds limit {limit}")]
    DimensionExceeded { requested: usize, limit: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("only {succeeded} of {requested} realizations succeeded: {first_error}")]
    PartialEnsemble {
        succeeded: usize,
        requested: usize,
        first_error: String,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Process exit code: 1 configuration, 2 numerical, 3 partial ensemble.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_) | Error::Config(_) | Error::Io(_) => 1,
            Error::OutOfRange { .. }
            | Error::DimensionExceeded { .. }
            | Error::Numerical(_)
            | Error::InsufficientData(_) => 2,
            Error::PartialEnsemble { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
