//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (bad hyperparameters, degenerate splits, ...).
    #[error("configuration error: {0}")]
    Config(String),
    /// Malformed or incompatible input data.
    #[error("data error: {0}")]
    Data(String),
    /// An internal contract was violated (corrupted tree, length mismatch, ...).
    #[error("contract violation: {0}")]
    Contract(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// Process exit code for the CLI: 1 config, 2 data, 3 contract.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Data(_) => 2,
            Error::Contract(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
