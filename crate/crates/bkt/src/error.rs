//! Error taxonomy shared by every layer of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Error type the consumer callback of a pipelined read may return.
pub type BoxedError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("malformed footer: {0}")]
    MalformedFooter(String),

    #[error("inconsistent basket index: {0}")]
    IndexInconsistent(String),

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("length mismatch: expected {expected} bytes, got {actual}")]
    LengthMismatch { expected: u64, actual: u64 },

    #[error("crc mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    CrcMismatch { stored: u32, computed: u32 },

    #[error("truncated: need {needed} bytes, only {available} available")]
    Truncated { needed: u64, available: u64 },

    #[error("{0} trailing bytes after final entry")]
    TrailingBytes(u64),

    #[error("unknown codec id {0}")]
    UnknownCodec(u8),

    #[error("corrupt compressed stream: {0}")]
    CorruptStream(String),

    #[error("no such column: {0:?}")]
    NoSuchColumn(String),

    #[error("type mismatch: {0}")]
    TypeMismatch(String),

    #[error("value out of domain: {0}")]
    ValueOutOfDomain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sink error: {0}")]
    Sink(#[source] std::io::Error),

    #[error("source error: {0}")]
    Source(#[source] std::io::Error),

    #[error("writer already closed")]
    ClosedWriter,

    #[error("memfile handle already closed")]
    HandleClosed,

    #[error("merger already closed")]
    MergerClosed,

    #[error("{0} merger handle(s) still open")]
    HandlesOutstanding(usize),

    #[error("schema mismatch in {path}: {detail}")]
    SchemaMismatch { path: String, detail: String },

    #[error("consumer error: {0}")]
    Consumer(#[source] BoxedError),

    #[error("column {column_id}, basket at entry {first_entry}: {source}")]
    Basket {
        column_id: u32,
        first_entry: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    InFile {
        path: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wraps an error with the coordinates of the basket it occurred in.
    pub(crate) fn in_basket(self, column_id: u32, first_entry: u64) -> Error {
        Error::Basket {
            column_id,
            first_entry,
            source: Box::new(self),
        }
    }

    /// Wraps an error with the file it occurred in.
    pub(crate) fn in_file(self, path: &std::path::Path) -> Error {
        Error::InFile {
            path: path.display().to_string(),
            source: Box::new(self),
        }
    }

    /// Strips location attribution, exposing the underlying failure.
    pub fn root_cause(&self) -> &Error {
        match self {
            Error::Basket { source, .. } | Error::InFile { source, .. } => source.root_cause(),
            other => other,
        }
    }
}
