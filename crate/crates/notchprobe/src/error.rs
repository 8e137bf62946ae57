use std::path::PathBuf;

use notchprobe_core::Error as CoreError;

/// Failure of a command, grouped by exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid scenario:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Parse { .. } => 2,
            CliError::Validation(_) => 3,
            CliError::Core(e) => match e {
                CoreError::Normalization(_)
                | CoreError::Coverage { .. }
                | CoreError::Pairing { .. }
                | CoreError::Region(_)
                | CoreError::Fit(_)
                | CoreError::NotUnimodal { .. } => 4,
                _ => 3,
            },
            CliError::Io { .. } => 5,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        CliError::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
