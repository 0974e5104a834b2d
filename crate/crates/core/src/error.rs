use std::path::PathBuf;

use thiserror::Error;
use whin_autodiff::AutodiffError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("referential integrity: {0}")]
    Dangling(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("format error in {path}: {msg}")]
    Format { path: String, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("sampling impossible: {0}")]
    SamplingImpossible(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("missing dependency: {0}")]
    MissingDependency(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Autodiff(#[from] AutodiffError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl AsRef<std::path::Path>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.as_ref().display().to_string(),
            msg: msg.into(),
        }
    }

    /// Process exit code: 1 usage/config, 2 data or format, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Contract(_) => 1,
            Error::Numeric(_) => 3,
            Error::Autodiff(AutodiffError::NonFinite { .. }) => 3,
            _ => 2,
        }
    }
}
