use thiserror::Error;

/// Errors raised by the simulator building blocks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A numeric parameter is outside its valid domain.
    #[error("parameter error: {0}")]
    Parameter(String),
    /// Inputs do not fit together (grid mismatch, wrong units, ...).
    #[error("structural error: {0}")]
    Structural(String),
    /// A scenario configuration cannot be simulated as requested.
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}

pub(crate) fn structural(msg: impl Into<String>) -> Error {
    Error::Structural(msg.into())
}
