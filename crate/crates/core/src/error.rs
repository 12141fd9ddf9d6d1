use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { line: usize, id: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("degenerate embedding: pre-normalization norm {norm:e} <= 1e-12")]
    DegenerateEmbedding { norm: f64 },

    #[error("non-finite gradient in parameter block `{block}` at index {index}")]
    NonFiniteGradient { block: &'static str, index: usize },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("gradient check failed: {0}")]
    GradientCheck(String),

    #[error("format: {0}")]
    Format(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Short machine-readable category, used for CLI diagnostics.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Parse { .. } | Error::DuplicateId { .. } | Error::Format(_) => "format",
            Error::Argument(_) | Error::DimensionMismatch { .. } => "argument",
            Error::DegenerateEmbedding { .. }
            | Error::NonFiniteGradient { .. }
            | Error::NonFiniteLoss { .. }
            | Error::GradientCheck(_) => "numeric",
            Error::Config(_) | Error::Json(_) => "config",
            Error::File { .. } | Error::Io(_) => "io",
        }
    }

    /// Attaches `path` to an I/O error.
    pub(crate) fn at(path: impl AsRef<Path>) -> impl FnOnce(io::Error) -> Self {
        let path = path.as_ref().to_path_buf();
        move |source| Error::File { path, source }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
