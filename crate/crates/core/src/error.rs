use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the engine.
///
/// Variants fall into two broad groups: configuration problems (bad
/// hyper-parameters, unknown presets) and data problems (malformed tensor
/// files, shape drift, missing files). [`Error::is_config`] tells them apart
/// so the command line front-end can map them to distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic bytes in {path}: expected \"FTN1\"")]
    BadMagic { path: PathBuf },

    #[error("unsupported tensor format in {path}: {detail}")]
    UnsupportedFormat { path: PathBuf, detail: String },

    #[error("truncated tensor payload in {path}: expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("tensor payload in {path} has {found} trailing bytes beyond the declared dims")]
    TrailingBytes { path: PathBuf, found: usize },

    #[error("non-finite value {value} at flat index {index}")]
    NonFinite { index: usize, value: f32 },

    #[error("invalid tensor shape: {0}")]
    InvalidShape(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("missing file referenced by manifest: {0}")]
    MissingFile(PathBuf),

    #[error("bank at {0} is locked by another writer")]
    Locked(PathBuf),

    #[error("selection exhausted: no candidates remain")]
    SelectionExhausted,

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the run configuration rather than the data.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
