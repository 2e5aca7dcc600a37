use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("page {page} out of range (store has {pages} pages)")]
    PageOutOfRange { page: u64, pages: u64 },

    #[error("page size mismatch: {0}")]
    PageSize(String),

    #[error("bad store header: {0}")]
    BadHeader(String),

    #[error("store is corrupt: {0}")]
    Corrupt(String),

    #[error("join precondition violated: {0}")]
    JoinOrder(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("no usable contacts in input")]
    NoUsableContacts,

    #[error("operation not supported: {0}")]
    Unsupported(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
