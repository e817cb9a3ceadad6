use std::io;
use std::path::{Path, PathBuf};

use crt_cea_core::error::ErrorClass;
use crt_cea_core::CeaError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),
    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}:{line}: {message}", .path.display())]
    Row { path: PathBuf, line: u64, message: String },
    #[error("{}: {message}", .path.display())]
    Format { path: PathBuf, message: String },
    #[error("configuration: {0}")]
    Config(String),
    #[error("{stage}: {source}")]
    Stage { stage: &'static str, source: CeaError },
}

pub type CliResult<T> = Result<T, CliError>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        if source.kind() == io::ErrorKind::NotFound {
            CliError::NotFound(path.to_path_buf())
        } else {
            CliError::Io { path: path.to_path_buf(), source }
        }
    }

    pub fn format(path: &Path, message: impl Into<String>) -> Self {
        CliError::Format { path: path.to_path_buf(), message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::NotFound(_) | CliError::Io { .. } => EXIT_IO,
            CliError::Stage { source, .. } => match source.class() {
                ErrorClass::Numerical => EXIT_NUMERICAL,
                ErrorClass::Validation => EXIT_VALIDATION,
            },
            _ => EXIT_VALIDATION,
        }
    }
}

/// Attaches a pipeline stage name to core errors.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> CliResult<T>;
}

impl<T> StageExt<T> for Result<T, CeaError> {
    fn stage(self, stage: &'static str) -> CliResult<T> {
        self.map_err(|source| CliError::Stage { stage, source })
    }
}
