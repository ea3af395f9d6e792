use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid patch layout: {0}")]
    InvalidLayout(String),

    #[error("volume format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("steady-state violation: {0}")]
    SteadyState(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("singular Patlak basis: {0}")]
    SingularBasis(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("phantom spec error: {0}")]
    Spec(String),

    #[error("score model produced non-finite output at step {step}")]
    Score { step: usize },

    #[error("numeric divergence at iteration {iteration}: norm {norm:e} exceeds {limit:e}")]
    Divergence {
        iteration: usize,
        norm: f64,
        limit: f64,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
