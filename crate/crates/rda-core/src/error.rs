//! Error taxonomy shared by the whole workspace.
//!
//! Three failure classes matter here: structural misuse (shape or
//! configuration mismatches), bad caller input (out-of-range labels,
//! degenerate priors), and numeric blow-ups discovered mid-run.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Structural problems: dimension mismatches, invalid hyperparameters,
    /// malformed config files.
    #[error("configuration error: {0}")]
    Config(String),

    /// Bad runtime input: labels out of range, degenerate class priors,
    /// empty classes.
    #[error("input error: {0}")]
    Input(String),

    /// Non-finite values encountered during training or evaluation.
    /// Training loops abort with the offending iteration.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A serialized artifact could not be parsed back.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }
}
