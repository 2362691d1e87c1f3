use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("invalid tube: {0}")]
    InvalidTube(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{}: parse error at line {line}, column {column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{}: {message}", path.display())]
    Validation { path: PathBuf, message: String },

    #[error("{}: payload length mismatch: expected {expected} bytes, found {actual}", path.display())]
    LengthMismatch {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },

    #[error("{}: unknown dtype {dtype:?}", path.display())]
    UnknownDtype { path: PathBuf, dtype: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("referenced file does not exist: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("detection set is empty")]
    EmptyDetections,

    #[error("zero-area box cannot produce an appearance template")]
    ZeroAreaBox,

    #[error("search window around frame {frame} lies fully outside the frame")]
    SearchOutsideFrame { frame: usize },

    #[error("recall is undefined without ground-truth instances")]
    NoGroundTruth,
}

impl Error {
    /// True for errors caused by bad input documents or configuration, as
    /// opposed to failures while running an algorithm on valid inputs.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidBox(_)
                | Error::InvalidTube(_)
                | Error::Config(_)
                | Error::Parse { .. }
                | Error::Validation { .. }
                | Error::LengthMismatch { .. }
                | Error::UnknownDtype { .. }
                | Error::MissingFile(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn validation(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, err: &serde_json::Error) -> Self {
        Error::Parse {
            path: path.into(),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}
