//! Error taxonomy shared by every module.
//!
//! Two kinds of failure exist: a caller broke a documented precondition
//! (`Contract`), or an internal enumeration grew past its configured cap
//! (`Capacity`). The CLI maps them to exit codes 2 and 3.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A documented precondition was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),
    /// A bounded internal structure (offset set, candidate grid, tuple
    /// enumeration) would exceed its configured cap.
    #[error("capacity exceeded: {0}")]
    Capacity(String),
}

impl Error {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Contract(_) => 2,
            Error::Capacity(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Shorthand for a `Contract` error.
pub fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}

/// Shorthand for a `Capacity` error.
pub fn capacity(msg: impl Into<String>) -> Error {
    Error::Capacity(msg.into())
}
