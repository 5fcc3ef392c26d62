use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("iteration did not converge after {iterations} steps")]
    NonConvergence { iterations: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("training loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("target FDR must lie in (0, 1), got {0}")]
    InvalidQ(f64),

    #[error("at least two non-empty groups are required, got {0}")]
    InsufficientGroups(usize),

    #[error("no results to aggregate")]
    EmptyResults,

    #[error("invalid configuration for `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("invalid input data: {0}")]
    Data(String),

    #[error("too few complete rows: {rows} (need at least {required})")]
    TooFewRows { rows: usize, required: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dims(expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// Usage/validation failures map to exit code 2, everything else to 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Data(_) | Error::Json(_) => 2,
            Error::Csv(e) => match e.kind() {
                csv::ErrorKind::Io(_) => 1,
                _ => 2,
            },
            _ => 1,
        }
    }
}
