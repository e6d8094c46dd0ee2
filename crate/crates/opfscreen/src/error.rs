use std::path::Path;

use crate::case_io::CaseError;

/// Failure classes, one per process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Solver,
    Training,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Usage => 1,
            Self::Data => 2,
            Self::Solver => 3,
            Self::Training => 4,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}, line {line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Core(#[from] opfscreen_core::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        use opfscreen_core::Error as E;
        match self {
            Self::Usage(_) => ErrorKind::Usage,
            Self::Core(E::NotConverged(_)) => ErrorKind::Solver,
            Self::Core(E::TrainingDiverged { .. }) => ErrorKind::Training,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn json(path: &Path, source: serde_json::Error) -> Self {
        Self::Json {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn invalid(path: &Path, message: impl Into<String>) -> Self {
        Self::Invalid {
            path: path.display().to_string(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
