use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    /// Invalid model, run, or workload configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Appending would push a cache past its cap; the caller must evict first.
    #[error("capacity error: cache holds {len} pairs, appending {incoming} exceeds cap {capacity}")]
    Capacity {
        len: usize,
        incoming: usize,
        capacity: usize,
    },

    /// A documented precondition of a cache or engine operation was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Malformed caller input (empty samples, empty grids, ...).
    #[error("input error: {0}")]
    Input(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Self::Contract(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Self::Input(msg.into())
    }

    pub(crate) fn dimension(msg: impl Into<String>) -> Self {
        Self::Dimension(msg.into())
    }
}
