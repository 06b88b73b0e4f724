use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Bad input, invalid option values or a failed domain operation.
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn domain(message: impl std::fmt::Display) -> Self {
        CliError::Domain(message.to_string())
    }

    /// Prefix a domain message with the file it came from.
    pub fn in_file(path: &Path, message: impl std::fmt::Display) -> Self {
        CliError::Domain(format!("{}: {message}", path.display()))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } => 2,
            CliError::Domain(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
