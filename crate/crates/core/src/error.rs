use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on user-supplied parameters failed.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{value} is outside the domain {domain}")]
    Domain { value: f64, domain: &'static str },

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },

    /// All mass escaped through the hole; the open system is degenerate at
    /// this resolution.
    #[error("total mass underflow after {iterations} iterations: {context}")]
    MassUnderflow { iterations: usize, context: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: checksum mismatch (header {expected}, data {actual})")]
    Checksum {
        path: PathBuf,
        expected: String,
        actual: String,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Coarse classification used by front ends to choose exit codes.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::InvalidInput(_) | Error::Domain { .. } => ErrorCategory::Config,
            Error::NonConvergence { .. } | Error::MassUnderflow { .. } => ErrorCategory::Numerical,
            Error::DimensionMismatch { .. } => ErrorCategory::Config,
            Error::Io { .. } | Error::Parse { .. } | Error::Checksum { .. } => ErrorCategory::Io,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Numerical,
    Io,
}
