//! CLI error taxonomy mapped onto the documented exit codes:
//! 0 success, 2 usage, 3 missing/unreadable data, 4 numeric failure.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("missing data: {0}")]
    Missing(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Missing(_) | CliError::Io { .. } | CliError::Format { .. } => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn format(path: &std::path::Path, msg: impl Into<String>) -> CliError {
        CliError::Format {
            path: path.to_path_buf(),
            msg: msg.into(),
        }
    }
}

/// Attaches the offending path to raw IO errors; missing files keep their
/// own variant so exit-code mapping can distinguish them if needed.
pub fn io_at(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
