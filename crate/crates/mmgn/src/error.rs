//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by construction, solving, and I/O routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A numeric argument is outside its admissible domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Shapes of two operands do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A file or text input could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Build a [`Error::Domain`] from any message.
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Build a [`Error::Dimension`] from any message.
    pub fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    /// Build a [`Error::Parse`] from any message.
    pub fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
