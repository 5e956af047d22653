//! Error taxonomy shared by every module in the crate.
//!
//! The split matters to callers: configuration and dimension errors mean the
//! request itself was malformed, while numerical errors mean a well-formed
//! computation could not be completed at the required accuracy.

use thiserror::Error;

/// Unified error type for the toolkit.
#[derive(Debug, Error)]
pub enum CoreError {
    /// The request was malformed: inconsistent options, invalid parameter
    /// values, or violated preconditions that a caller can fix.
    #[error("configuration error: {0}")]
    Config(String),

    /// Array or vector shapes do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A well-formed computation failed numerically (factorization broke
    /// down, values became non-finite, residual tolerance missed).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The combination of inputs is valid but outside what this
    /// implementation supports (for example, an oracle asked to handle a
    /// dynamics class it has no closed form for).
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Underlying I/O failure while reading or writing artifacts.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A file was readable but its contents do not match the expected format.
    #[error("format error: {0}")]
    Format(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, CoreError>;
