//! Crate-wide error type.

use std::path::PathBuf;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest {path}, entry {index}: {message}")]
    Manifest {
        path: PathBuf,
        index: usize,
        message: String,
    },

    #[error("invalid sampling request: {0}")]
    Sampling(String),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("rendering error: {0}")]
    Render(String),

    #[error("embedding dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid embedding input: {0}")]
    Embedding(String),

    #[error("backend `{backend}` failed: {message}")]
    Backend { backend: String, message: String },

    #[error("attention dump invalid: {0}")]
    AttentionDump(String),

    #[error("position index out of range: {0}")]
    PositionRange(String),

    #[error("probe error: {0}")]
    Probe(String),

    #[error("prompt error: {0}")]
    Prompt(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
