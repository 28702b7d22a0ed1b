//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration, preset, or argument combination.
    #[error("configuration error: {0}")]
    Config(String),
    /// Numerical failure at evaluation time (non-finite value, singular system, ...).
    #[error("numeric error: {0}")]
    Numeric(String),
    /// A value left its admissible domain (density out of range, window outside grid, ...).
    #[error("domain error: {0}")]
    Domain(String),
    /// Malformed input data, with location when known.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
