use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the engine can report.
///
/// Variants are grouped so the CLI can map them onto its exit codes via
/// [`Error::category`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: String, reason: String },

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("support mismatch between distributions")]
    SupportMismatch,

    #[error("KL divergence undefined: q has zero mass where p has {0:e}")]
    AbsoluteContinuity(f64),

    #[error("corrupt artifact {path}: {reason}")]
    Artifact { path: PathBuf, reason: String },
}

/// Coarse error classes, one per non-zero CLI exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Config,
    Io,
    Numeric,
    InsufficientData,
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn category(&self) -> Category {
        match self {
            Error::Config { .. } => Category::Config,
            Error::Io { .. } | Error::Parse { .. } | Error::Artifact { .. } => Category::Io,
            Error::Numeric(_) => Category::Numeric,
            Error::InsufficientData(_) => Category::InsufficientData,
            Error::InvalidInput(_)
            | Error::DimensionMismatch { .. }
            | Error::SupportMismatch
            | Error::AbsoluteContinuity(_) => Category::Config,
        }
    }
}
