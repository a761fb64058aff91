use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("non-finite value: {0}")]
    Numeric(String),

    #[error("bad file format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("inconsistent inputs: {0}")]
    Consistency(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("enumeration too large: {0}")]
    Size(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("binning failed: {0}")]
    Binning(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("serialization: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
