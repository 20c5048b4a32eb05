//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Vector or matrix lengths do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A request exceeds a hard capacity bound (e.g. exhaustive enumeration).
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// A numeric target lies outside the attainable range.
    #[error("out of range: {0}")]
    OutOfRange(String),

    /// Malformed binary or text input; `offset` is the byte where parsing failed.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    /// Checkpoint body does not match its recorded checksum.
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    /// Checkpoint was written by an unknown format version.
    #[error("unsupported checkpoint version: {0}")]
    VersionMismatch(String),

    /// Run configuration failed validation.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Attach the offending path to an io error so CLI messages name the file.
pub(crate) fn io_at(path: &std::path::Path, err: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(
        err.kind(),
        format!("{}: {}", path.display(), err),
    ))
}

pub type Result<T> = std::result::Result<T, Error>;
