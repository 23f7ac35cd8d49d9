use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: row {row}: {message}")]
    Row { path: PathBuf, row: u64, message: String },
    #[error("{file}: {message}")]
    Bundle { file: PathBuf, message: String },
    #[error("{file}: {message}")]
    Report { file: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] homeopt_core::Error),
    #[error("internal: {0}")]
    Internal(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn bundle(file: impl AsRef<Path>, message: impl ToString) -> Self {
        Error::Bundle {
            file: file.as_ref().to_path_buf(),
            message: message.to_string(),
        }
    }

    pub fn report(file: impl AsRef<Path>, message: impl ToString) -> Self {
        Error::Report {
            file: file.as_ref().to_path_buf(),
            message: message.to_string(),
        }
    }

    /// Process exit code: 1 for configuration, 2 for data, 3 for internal faults.
    pub fn exit_code(&self) -> i32 {
        use homeopt_core::Error as C;
        match self {
            Error::Config(_) => 1,
            Error::Core(C::InvalidParams(_) | C::InvalidFraction(_) | C::InvalidGamma(_)) => 1,
            Error::Core(C::NotStochastic { .. }) => 3,
            Error::Internal(_) => 3,
            _ => 2,
        }
    }
}
