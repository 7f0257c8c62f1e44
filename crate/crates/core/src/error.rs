//! Error type shared by all simulator modules.

use alloc::string::String;
use core::fmt;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by the simulator and training code.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument violated a precondition (negative variance, bad shape, ...).
    InvalidArgument(String),
    /// A matrix inversion hit an (effectively) singular matrix.
    Singular(String),
    /// Tensor shapes do not line up for the requested operation.
    ShapeMismatch(String),
    /// A configuration value is inconsistent or out of range.
    InvalidConfig(String),
    /// Checkpoint bytes are malformed or do not match the expected model.
    Checkpoint(String),
    /// Training aborted on a non-finite loss or gradient.
    NonFinite(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(m) => write!(f, "invalid argument: {m}"),
            Error::Singular(m) => write!(f, "singular matrix: {m}"),
            Error::ShapeMismatch(m) => write!(f, "shape mismatch: {m}"),
            Error::InvalidConfig(m) => write!(f, "invalid config: {m}"),
            Error::Checkpoint(m) => write!(f, "checkpoint: {m}"),
            Error::NonFinite(m) => write!(f, "non-finite value: {m}"),
        }
    }
}

impl core::error::Error for Error {}
