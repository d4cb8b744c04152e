use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(uqpde::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 1 for configuration problems, 2 for everything that fails while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) | CliError::Io { .. } => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<uqpde::Error> for CliError {
    fn from(e: uqpde::Error) -> Self {
        match e {
            uqpde::Error::InvalidArgument(msg) => CliError::Config(msg),
            e @ uqpde::Error::Cfl { .. } => CliError::Config(e.to_string()),
            e => CliError::Numerical(e),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
