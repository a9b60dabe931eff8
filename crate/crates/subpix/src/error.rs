//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by alignment, learning, and I/O operations.
#[derive(Debug, Error)]
pub enum Error {
    /// A sample location or patch footprint left the valid image area.
    #[error("sample location out of bounds: {0}")]
    OutOfBounds(String),

    /// An affine warp whose linear part cannot be inverted.
    #[error("singular warp (|det| < {0:e})")]
    SingularWarp(f64),

    /// A normal-equation or ridge system that is not positive definite.
    #[error("singular system: {0}")]
    SingularSystem(String),

    /// Vector or matrix sizes do not agree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Malformed image data.
    #[error("parse error: {0}")]
    Parse(String),

    /// Malformed model file (bad magic, version, truncation, or checksum).
    #[error("format error: {0}")]
    Format(String),

    /// Invalid benchmark or learner configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
