use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },

    #[error("duplicate metadata for entity `{0}`")]
    DuplicateEntity(String),

    #[error("unknown entity `{0}`")]
    UnknownEntity(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid distance matrix: {0}")]
    InvalidMatrix(String),

    #[error("empty group")]
    EmptyGroup,

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
