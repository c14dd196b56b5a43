use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the numerical routines and the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error in {function}: {detail}")]
    Domain { function: &'static str, detail: String },

    #[error("{function} overflowed for the given arguments")]
    Overflow { function: &'static str },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("no background found: {0}")]
    NoBackground(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch { expected: Vec<usize>, actual: Vec<usize> },

    #[error("empty region: {0}")]
    EmptyRegion(String),

    #[error(transparent)]
    Load(#[from] LoadError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialize(String),
}

impl Error {
    pub(crate) fn domain(function: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            function,
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

/// Structured failures when decoding a volume from disk.
#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: unrecognized file format ({detail})")]
    UnknownFormat { path: PathBuf, detail: String },

    #[error("{path}: unsupported datatype code {code}")]
    UnsupportedDtype { path: PathBuf, code: i16 },

    #[error("{path}: truncated payload, expected {expected} bytes but found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("{path}: invalid header field `{field}`: {detail}")]
    BadField {
        path: PathBuf,
        field: &'static str,
        detail: String,
    },

    #[error("{path}: non-finite sample at element {index}")]
    NonFinite { path: PathBuf, index: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: sidecar: {detail}")]
    Sidecar { path: PathBuf, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;
