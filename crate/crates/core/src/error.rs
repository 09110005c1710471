use thiserror::Error;

/// Errors raised anywhere in the fitting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Cholesky factorization hit a non-positive pivot (1-based index).
    #[error("matrix is not positive definite: pivot {pivot} is non-positive ({value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("formula error at position {position}: {message}")]
    Formula { position: usize, message: String },

    #[error("intercept not permitted: the formula must start with `0 +` (a column of ones in the linear design is not identifiable against the tree leaf values)")]
    InterceptNotPermitted,

    #[error("data error: {0}")]
    Data(String),

    #[error("terminal node {node} has no observations")]
    EmptyTerminal { node: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Coarse classification used to pick a process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Formula { .. } | Error::InterceptNotPermitted | Error::InvalidParameter(_) => {
                ErrorCategory::Usage
            }
            Error::Data(_) | Error::Io(_) | Error::Csv(_) | Error::DimensionMismatch(_) => {
                ErrorCategory::Data
            }
            Error::NotPositiveDefinite { .. } | Error::Numerical(_) | Error::EmptyTerminal { .. } => {
                ErrorCategory::Numerical
            }
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
