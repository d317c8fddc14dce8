//! Parallel columnar event I/O.
//!
//! Files hold rows of a fixed schema as per-column compressed *baskets*:
//! an 8-byte header, then baskets appended in seal order, then a footer
//! with the schema and a per-column basket index. The layout is written
//! in one streaming pass, supports selective single-column reads, and
//! merges by basket concatenation.
//!
//! Parallelism follows one rule everywhere: compression and decompression
//! fan out across threads, while each byte sink stays owned by exactly
//! one thread.
//!
//! - [`FileWriter`] appends rows and seals baskets in parallel.
//! - [`BufferMerger`] lets many threads write one file: workers fill
//!   in-memory files whose sealed baskets funnel through a bounded queue
//!   to a single merge thread.
//! - [`FileReader`] reads columns sequentially, column-parallel, or as a
//!   basket pipeline feeding an in-order consumer.
//! - [`run_merge`] concatenates whole files without re-compressing.
//! - [`bench`] and [`report`] reproduce the classic throughput-scaling
//!   experiments with machine-readable output.

pub mod bench;
pub mod codec;
pub mod columns;
pub mod error;
pub mod format;
pub mod merge;
pub mod merger;
pub mod reader;
pub mod report;
pub mod source;
pub mod writer;

mod pool;
mod sync;

pub use codec::{CodecId, CompressionLevel};
pub use columns::{ColumnValues, Value};
pub use error::{Error, Result};
pub use format::{Column, Schema, TypeCode, FILE_EXTENSION};
pub use merge::{run_merge, MergeJob};
pub use merger::{BufferMerger, MemFileHandle};
pub use reader::{BasketFailure, FileReader, IntegrityReport, ReadOptions};
pub use report::{Operation, ThroughputReport};
pub use source::ByteSource;
pub use writer::{FileWriter, WriteSummary, WriterOptions};

/// Worker-pool size used by default: one thread per available core.
pub fn default_thread_count() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}
