use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
///
/// Variants are grouped by pipeline stage so a caller (the CLI in
/// particular) can map them onto input-error vs numerical-error exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("archive error: {0}")]
    Archive(String),

    #[error("corpus error: {0}")]
    Corpus(String),

    #[error("labeling error: {0}")]
    Labeling(String),

    #[error("topic model error: {0}")]
    Topics(String),

    #[error("regression error: {0}")]
    Regression(String),

    #[error("{context} did not converge after {iterations} iterations")]
    NonConvergence {
        context: String,
        iterations: usize,
        /// Coefficients at the last iterate, for diagnostics.
        last_coefficients: Vec<f64>,
    },

    #[error("pipeline error: {0}")]
    Pipeline(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by missing or malformed inputs, false for
    /// numerical and degeneracy failures.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Config(_)
                | Error::Archive(_)
                | Error::Corpus(_)
                | Error::Labeling(_)
                | Error::Pipeline(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
