use std::path::{Path, PathBuf};

use parity_forge::ErrorKind;
use thiserror::Error;

/// Process exit codes.
pub mod exit_code {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const PARSE: i32 = 2;
    pub const VALIDATION: i32 = 3;
    pub const NUMERICAL: i32 = 4;
    pub const SPLIT: i32 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("cannot serialize report: {0}")]
    Json(#[source] serde_json::Error),
    #[error(transparent)]
    Core(#[from] parity_forge::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn csv(path: &Path, source: csv::Error) -> Self {
        if !source.is_io_error() {
            return CliError::Parse(format!("{}: {source}", path.display()));
        }
        match source.into_kind() {
            csv::ErrorKind::Io(e) => CliError::io(path, e),
            _ => unreachable!("checked is_io_error"),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Json(_) => exit_code::IO,
            CliError::Parse(_) => exit_code::PARSE,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Validation => exit_code::VALIDATION,
                ErrorKind::Numerical => exit_code::NUMERICAL,
                ErrorKind::Split => exit_code::SPLIT,
            },
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
