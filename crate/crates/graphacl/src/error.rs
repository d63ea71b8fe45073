use std::path::PathBuf;

use thiserror::Error;

/// Failures of the command-line layer, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{path}: {msg}")]
    Data { path: PathBuf, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Engine(#[from] graphacl_core::Error),

    #[error("theory check failed: {}", .0.join("; "))]
    TheoryViolation(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Parse { .. } | CliError::Data { .. } | CliError::Io { .. } => 2,
            CliError::Engine(graphacl_core::Error::Divergence { .. })
            | CliError::Engine(graphacl_core::Error::NonFinite(_)) => 3,
            CliError::Engine(graphacl_core::Error::InvalidConfig(_))
            | CliError::Engine(graphacl_core::Error::InvalidSpec(_))
            | CliError::Engine(graphacl_core::Error::InvalidArgument(_)) => 1,
            CliError::Engine(_) => 2,
            CliError::TheoryViolation(_) => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

pub type CliResult<T> = Result<T, CliError>;
