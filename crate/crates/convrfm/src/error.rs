//! Crate-wide error type and result alias.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A tensor or matrix had a different extent than the operation requires.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// Free-form shape incompatibility (multi-axis cases).
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Input matrix failed a symmetry check.
    #[error("matrix not symmetric: max |a_ij - a_ji| = {max_delta:e}")]
    NotSymmetric { max_delta: f64 },

    /// Cholesky pivot was non-positive.
    #[error("matrix not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    /// Ridge system unsolvable even after the fallback regularizer.
    #[error("singular kernel system (condition estimate {condition:e}); increase the ridge")]
    SingularKernel { condition: f64 },

    /// A statistic has no defined value (e.g. correlation of a constant matrix).
    #[error("undefined statistic: {0}")]
    UndefinedStatistic(&'static str),

    /// Structural problem in a serialized artifact.
    #[error("format error in {path} at byte {offset}: {message}")]
    Format {
        path: String,
        offset: u64,
        message: String,
    },

    /// Non-finite training loss.
    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("eigensolver failed to converge within the sweep limit")]
    EigenFailure,

    /// A documented precondition of a routine does not hold for the input.
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("i/o error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<String>, offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            offset,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
