//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by model construction, evaluation, and optimization.
#[derive(Debug, Error)]
pub enum FimError {
    /// Vector or matrix dimensions do not agree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A morphing vector violates the box constraint.
    #[error("infeasible morphing vector: {0}")]
    Infeasible(String),

    /// A scalar parameter violates its validity range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A numerical operation failed or produced an impossible value.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A gradient workspace was used with a morphing vector it was not built for.
    #[error("stale gradient workspace: fingerprint mismatch")]
    StaleWorkspace,

    /// Configuration file could not be parsed or validated.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FimError>;
