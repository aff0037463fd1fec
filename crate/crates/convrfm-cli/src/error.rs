//! Command-line error type and the process exit-code contract.
//!
//! Exit codes: 0 success, 2 usage error (bad flags, unknown configuration
//! keys, invalid argument combinations), 3 data or format error (unreadable
//! files, malformed containers, incompatible shapes), 4 numerical failure
//! (divergence, singular systems, undefined statistics).

use std::fmt;

use convrfm::Error;

#[derive(Debug)]
pub enum CliError {
    /// Problems with how the command was invoked.
    Usage(String),
    /// Errors surfaced by the underlying library.
    Lib(Error),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self::Usage(message.into())
    }

    /// Process exit code for this error.
    pub fn code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Lib(e) => match e {
                Error::InvalidArgument(_) | Error::EmptyInput(_) | Error::AssumptionViolated(_) => {
                    2
                }
                Error::Format { .. }
                | Error::Io { .. }
                | Error::DimensionMismatch { .. }
                | Error::ShapeMismatch(_) => 3,
                Error::NotSymmetric { .. }
                | Error::NotPositiveDefinite { .. }
                | Error::SingularKernel { .. }
                | Error::UndefinedStatistic(_)
                | Error::Diverged { .. }
                | Error::EigenFailure => 4,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "{m}"),
            Self::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self::Lib(e)
    }
}

/// Wraps a raw I/O failure with the path it occurred on.
pub fn io_error(path: &std::path::Path, source: std::io::Error) -> CliError {
    CliError::Lib(Error::Io {
        path: path.display().to_string(),
        source,
    })
}
