use thiserror::Error;

/// Errors raised by the numerical engine, environments and agents.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    Shape { context: String, expected: Vec<usize>, actual: Vec<usize> },

    #[error("loss node must be scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("architecture mismatch: {0}")]
    Architecture(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid maze layout: {0}")]
    Layout(String),

    #[error("replay buffer is empty")]
    EmptyBuffer,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
