use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is outside its allowed range.
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: String, reason: String },

    /// An operation received input that violates its preconditions.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Two vectors that must agree in length do not.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// The SVM solver hit its iteration cap before reaching the requested gap.
    #[error("solver did not converge after {iterations} iterations (last relative gap {last_gap:e})")]
    NonConvergence {
        iterations: usize,
        last_gap: f64,
        /// Primal objective recorded at every gap check.
        objective_trace: Vec<f64>,
    },

    /// A non-finite number showed up where a finite one is required.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// An upstream artifact (model file, manifest, stream) is absent.
    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),

    /// Artifacts on disk were produced from a different configuration.
    #[error("config hash mismatch for {stage}: manifest has {found}, current config is {expected}")]
    ConfigMismatch {
        stage: String,
        expected: String,
        found: String,
    },

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line tool.
    ///
    /// 0 success, 2 validation, 3 missing artifact, 4 numeric failure, 1 for
    /// anything else (IO, parse).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. }
            | Error::InvalidInput(_)
            | Error::DimensionMismatch { .. }
            | Error::ConfigMismatch { .. } => 2,
            Error::MissingArtifact(_) => 3,
            Error::NonConvergence { .. } | Error::Numeric(_) => 4,
            Error::Io { .. } | Error::Parse { .. } => 1,
        }
    }
}
