use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor dimensions do not line up for the requested operation.
    #[error("{op}: dimension mismatch: {detail}")]
    Shape { op: &'static str, detail: String },

    /// An operation was called out of order or with arguments outside its contract.
    #[error("usage error: {0}")]
    Usage(String),

    /// A network, training or dataset configuration is inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A value outside the mathematical domain of an operation (zero vector, empty set).
    #[error("domain error: {0}")]
    Domain(String),

    /// Problems with the data itself: labels, manifests, images.
    #[error("data error: {0}")]
    Data(String),

    /// A persisted file is malformed or has an unsupported version.
    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
