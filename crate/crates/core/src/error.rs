use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("non-finite value at index {index}: {context}")]
    NonFinite { index: usize, context: String },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    Solver { iterations: usize, residual: f64 },
    #[error("planning failed: best node at d_trans={best_trans:.4} m, d_rot={best_rot:.4} rad after {nodes} nodes")]
    Planning { best_trans: f64, best_rot: f64, nodes: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parse error in {path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Domain failures (planning, training numerics) map to exit code 1, everything
    /// configuration or I/O related to exit code 2.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Planning { .. } | Error::Solver { .. } | Error::NonFinite { .. } | Error::State(_) | Error::Shape(_) | Error::Precondition(_) => 1,
            Error::Config(_) | Error::Parse { .. } | Error::Checkpoint(_) | Error::Alignment(_) | Error::Io { .. } => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
