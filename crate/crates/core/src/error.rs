use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("autodiff error: {0}")]
    Autodiff(String),

    #[error("format error in {file}: {msg}")]
    Format { file: PathBuf, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("interpolation error: {0}")]
    Interpolation(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("montage error: {0}")]
    Montage(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn format(file: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            file: file.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Broad category used by front ends to pick an exit status.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Dimension(_)
            | Error::NonFinite(_)
            | Error::Autodiff(_)
            | Error::Contract(_)
            | Error::Training(_) => ErrorKind::Numeric,
            Error::Config(_) => ErrorKind::Usage,
            Error::Format { .. }
            | Error::Interpolation(_)
            | Error::Split(_)
            | Error::Montage(_)
            | Error::Io { .. } => ErrorKind::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}
