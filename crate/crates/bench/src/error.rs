use std::io;
use std::path::PathBuf;

use boundopt::nmf::{MatrixCsvError, NmfError};
use boundopt::SolveError;
use thiserror::Error;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_SOLVER: u8 = 3;
pub const EXIT_IO: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("solver failed: {0}")]
    Solve(#[from] SolveError),
    #[error("{solver} stopped with status {status}")]
    NotConverged { solver: &'static str, status: &'static str },
    #[error(transparent)]
    Nmf(#[from] NmfError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: MatrixCsvError,
    },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Solve(SolveError::Config(_)) => EXIT_USAGE,
            CliError::Nmf(NmfError::InvalidDimensions { .. }) => EXIT_USAGE,
            CliError::Solve(_) | CliError::NotConverged { .. } | CliError::Nmf(_) => EXIT_SOLVER,
            CliError::Io { .. } | CliError::Csv { .. } | CliError::Format { .. } => EXIT_IO,
        }
    }
}
