//! Error type shared by all modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A construction request violated a precondition (bad resolution,
    /// degree out of range, empty product, ...).
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    /// A profile sample was zero, negative, or below its declared floor.
    #[error("invalid conformal profile: {0}")]
    InvalidProfile(String),

    /// Sizes of two objects that must agree (profile vs vertex count,
    /// complex dimensions in a gluing, ...) do not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An eigensolve stopped before reaching the requested residual.
    #[error("solver did not converge: {context} (best residual {residual:.3e})")]
    NonConvergence { context: String, residual: f64 },

    /// A driver was asked for something the model cannot realize
    /// (degenerate targets, infeasible volume split, exhausted budget).
    #[error("infeasible request: {0}")]
    Infeasible(String),

    /// Failure while parsing an external file (complex description, JSON config).
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
