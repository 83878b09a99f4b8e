use std::path::PathBuf;

use thiserror::Error;

/// Process exit statuses.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NUMERICAL: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: parse error at line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("`{key}` out of range: {reason}")]
    RangeViolation { key: String, reason: String },
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Schema { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] sodsim::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn schema(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        CliError::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        use sodsim::Error as E;
        match self {
            CliError::Parse { .. }
            | CliError::UnknownKey(_)
            | CliError::RangeViolation { .. }
            | CliError::Usage(_) => exit::USAGE,
            CliError::Io { .. } | CliError::Schema { .. } => exit::DATA,
            CliError::Core(e) => match e {
                E::InvalidParameter { .. } => exit::USAGE,
                E::EmptyInput
                | E::LengthMismatch { .. }
                | E::DimensionMismatch(_)
                | E::NonFinite { .. }
                | E::NotTwoColumns(_)
                | E::InsufficientData(_)
                | E::NonPositiveWeight { .. } => exit::DATA,
                _ => exit::NUMERICAL,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
