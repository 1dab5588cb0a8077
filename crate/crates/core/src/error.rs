use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A point or value fell outside the region an operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid parameters or inconsistent configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Inputs that are individually valid but incompatible (geometry, counts).
    #[error("input error: {0}")]
    Input(String),

    /// The similarity metric could not be evaluated on the drawn sample.
    #[error("degenerate metric: {0}")]
    DegenerateMetric(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A distance metric is undefined, typically because a mask is empty.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("unsupported format in {path}: {detail}")]
    UnsupportedFormat { path: PathBuf, detail: String },

    #[error("corrupt file {path}: {detail}")]
    CorruptFile { path: PathBuf, detail: String },

    #[error("missing header key `{key}` in {path}")]
    MissingHeaderKey { path: PathBuf, key: String },

    #[error("unrecognized header key `{key}` in {path}")]
    UnknownHeaderKey { path: PathBuf, key: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
