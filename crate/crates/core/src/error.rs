use std::io;

use thiserror::Error;

/// Errors raised while decoding a CKVT trace file.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic: expected \"CKVT\", found {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported trace version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("truncated payload: needed {needed} more bytes while reading {context}")]
    Truncated { context: &'static str, needed: usize },
    #[error("dimension overflow: {0}")]
    DimensionOverflow(String),
    #[error("invalid metadata: {0}")]
    Metadata(String),
    #[error("{0} trailing bytes after metadata")]
    TrailingBytes(usize),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
