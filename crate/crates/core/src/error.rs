use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate rotation input: {0}")]
    DegenerateRotation(String),
    #[error("matrix is not a rotation (deviation {deviation:.3e})")]
    NotOrthonormal { deviation: f64 },
    #[error("rank-deficient point set: {0}")]
    RankDeficient(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("malformed grid: {0}")]
    MalformedGrid(String),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unreachable target: {0}")]
    Unreachable(String),
    #[error("backward through a detached graph: {0}")]
    Detached(String),
    #[error("incompatible checkpoints: {0}")]
    Incompatible(String),
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl AsRef<std::path::Path>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.as_ref().display().to_string(),
            message: message.to_string(),
        }
    }
}
