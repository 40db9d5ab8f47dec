use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("numerical guard tripped: {0}")]
    Guard(vecadvect::Error),

    #[error(transparent)]
    Core(vecadvect::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("acceptance failed: {0}")]
    Acceptance(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(vecadvect::Error::Io(_)) | CliError::Io { .. } => 1,
            CliError::Core(_) => 2,
            CliError::Guard(_) => 3,
            CliError::Acceptance(_) => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

impl From<vecadvect::Error> for CliError {
    fn from(e: vecadvect::Error) -> Self {
        use vecadvect::Error::*;
        match e {
            Cfl(_) | FlaggedPaths { .. } | Branch(_) => CliError::Guard(e),
            _ => CliError::Core(e),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
