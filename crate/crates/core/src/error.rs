use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RafmError {
    /// Invalid user-supplied data or configuration.
    #[error("input error: {0}")]
    Input(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A caller broke an operation's precondition (e.g. `l > k`).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A value outside the mathematical domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// NaN or infinity produced while evaluating or training.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("snapshot error: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl RafmError {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        RafmError::Input(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        RafmError::Contract(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        RafmError::Domain(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        RafmError::Numeric(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, RafmError>;
