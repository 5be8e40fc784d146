//! CLI errors and their exit codes.

use gwmv_core::error::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("invalid sweep parameter: {0}")]
    InvalidSweepParameter(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::InvalidSweepParameter(_) => 2,
            Self::Data(_) | Self::Io { .. } => 3,
            Self::Numerical(_) => 4,
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidConfig(_)
            | CoreError::KTooLarge { .. }
            | CoreError::PrototypeCountExceedsSamples { .. }
            | CoreError::InvalidMeasure(_) => Self::Config(e.to_string()),
            CoreError::LinearOtFailure(_) => Self::Numerical(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}
