use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("cannot parse {path}: {reason}")]
    Parse { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] patlak_core::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 2 for bad configuration or input, 3 for numeric
    /// divergence, 4 for file-system and volume-format failures.
    pub fn exit_code(&self) -> i32 {
        use patlak_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Parse { .. } => 2,
            CliError::Io { .. } => 4,
            CliError::Core(e) => match e {
                E::Divergence { .. } | E::Score { .. } => 3,
                E::Io { .. } | E::Format { .. } => 4,
                _ => 2,
            },
        }
    }
}
