//! Many-writers-one-file merging.
//!
//! Worker threads obtain [`MemFileHandle`]s from a shared [`BufferMerger`],
//! fill them with rows, and close them. Each handle serializes and
//! compresses its own baskets on the worker's thread; a closed handle's
//! finished memory file travels over a bounded queue to the single merge
//! thread, which splices baskets into the output with entry ranges rebased
//! in dequeue order. The output sink is touched by the merge thread alone,
//! so workers never contend on it, and the queue bound caps buffered
//! memory at `capacity` memory files.

use std::io::Write;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use crate::columns::{ColumnBuffer, PendingBasket, Value};
use crate::error::{Error, Result};
use crate::format::Schema;
use crate::writer::{seal_pending, validate_row, FileWriter, SealedBasket, WriteSummary, WriterOptions};

pub(crate) struct MemFileData {
    /// Sealed baskets per column, `first_entry` local to this file.
    per_column: Vec<Vec<SealedBasket>>,
    local_entries: u64,
}

struct Shared {
    queue: crate::sync::BoundedQueue<MemFileData>,
    live_handles: AtomicUsize,
    poisoned: AtomicBool,
}

/// An in-memory single-writer file bound to one worker thread. Entry
/// numbering is local (the first row is entry 0); the merge thread
/// rebases ranges when the closed handle's baskets reach the output.
pub struct MemFileHandle {
    shared: Arc<Shared>,
    schema: Schema,
    options: WriterOptions,
    buffers: Vec<ColumnBuffer>,
    sealed: Vec<Vec<SealedBasket>>,
    rows: u64,
    closed: bool,
}

impl MemFileHandle {
    /// Appends one row with the same validation and atomicity as
    /// [`FileWriter::append_row`]. Fails fast with [`Error::MergerClosed`]
    /// once the merge thread has failed.
    pub fn append_row(&mut self, row: &[Value]) -> Result<()> {
        if self.closed {
            return Err(Error::HandleClosed);
        }
        if self.shared.poisoned.load(Ordering::SeqCst) {
            return Err(Error::MergerClosed);
        }
        validate_row(&self.schema, row)?;
        for buffer in &self.buffers {
            if buffer.pending_entries() == u32::MAX {
                return Err(Error::ValueOutOfDomain(
                    "basket entry count limit reached; lower basket_target_bytes".into(),
                ));
            }
        }
        for (value, buffer) in row.iter().zip(&mut self.buffers) {
            buffer
                .push(value)
                .expect("row was validated against the schema");
        }
        self.rows += 1;
        let target = self.options.basket_target_bytes;
        if self.buffers.iter().any(|b| b.plan_seal(target, false)) {
            self.seal_due(false)?;
        }
        Ok(())
    }

    pub fn append_rows(&mut self, rows: &[Vec<Value>]) -> Result<()> {
        for row in rows {
            self.append_row(row)?;
        }
        Ok(())
    }

    pub fn rows(&self) -> u64 {
        self.rows
    }

    /// Compresses due (or, when forced, all non-empty) column buffers on
    /// the calling thread; the merge thread never compresses.
    fn seal_due(&mut self, force: bool) -> Result<()> {
        let target = self.options.basket_target_bytes;
        let pending: Vec<PendingBasket> = self
            .buffers
            .iter_mut()
            .filter(|b| b.plan_seal(target, force))
            .map(|b| b.take_pending())
            .collect();
        for basket in seal_pending(pending, self.options.codec, self.options.level, 1)? {
            self.sealed[basket.header.column_id as usize].push(basket);
        }
        Ok(())
    }

    /// Seals the remainder and hands the finished memory file to the merge
    /// thread, blocking while the queue is at capacity. Handles that never
    /// received a row enqueue nothing.
    pub fn close(mut self) -> Result<()> {
        self.close_inner()
    }

    fn close_inner(&mut self) -> Result<()> {
        if self.closed {
            return Err(Error::HandleClosed);
        }
        self.closed = true;
        let result = self.flush_to_queue();
        self.shared.live_handles.fetch_sub(1, Ordering::SeqCst);
        result
    }

    fn flush_to_queue(&mut self) -> Result<()> {
        self.seal_due(true)?;
        if self.rows == 0 {
            return Ok(());
        }
        let per_column = std::mem::take(&mut self.sealed);
        let bytes = per_column
            .iter()
            .flatten()
            .map(SealedBasket::encoded_len)
            .sum();
        let data = MemFileData {
            per_column,
            local_entries: self.rows,
        };
        self.shared
            .queue
            .push(data, bytes)
            .map_err(|_| Error::MergerClosed)
    }
}

impl Drop for MemFileHandle {
    fn drop(&mut self) {
        if !self.closed {
            let _ = self.close_inner();
        }
    }
}

/// Fan-in writer: hands out memory files to any number of threads and
/// merges them into one output file on a dedicated thread.
pub struct BufferMerger<W: Write + Send + 'static> {
    shared: Arc<Shared>,
    schema: Schema,
    options: WriterOptions,
    thread: Option<JoinHandle<Result<(WriteSummary, W)>>>,
}

impl<W: Write + Send + 'static> BufferMerger<W> {
    /// Opens the output on the calling thread (so creation errors surface
    /// here), then starts the merge thread. `queue_capacity` bounds how
    /// many closed memory files may wait unmerged.
    pub fn create(
        sink: W,
        schema: Schema,
        options: WriterOptions,
        queue_capacity: usize,
    ) -> Result<BufferMerger<W>> {
        if queue_capacity == 0 {
            return Err(Error::InvalidArgument(
                "queue_capacity must be positive".into(),
            ));
        }
        let mut writer = FileWriter::create(sink, schema.clone(), options)?;
        let shared = Arc::new(Shared {
            queue: crate::sync::BoundedQueue::new(queue_capacity),
            live_handles: AtomicUsize::new(0),
            poisoned: AtomicBool::new(false),
        });
        let thread_shared = Arc::clone(&shared);
        let thread = std::thread::Builder::new()
            .name("bkt-merger".into())
            .spawn(move || {
                while let Some(data) = thread_shared.queue.pop() {
                    if let Err(e) = writer.merge_baskets(&data.per_column, data.local_entries) {
                        thread_shared.poisoned.store(true, Ordering::SeqCst);
                        thread_shared.queue.close();
                        return Err(e);
                    }
                }
                match writer.close() {
                    Ok(summary) => Ok((summary, writer.into_sink())),
                    Err(e) => {
                        thread_shared.poisoned.store(true, Ordering::SeqCst);
                        Err(e)
                    }
                }
            })
            .expect("spawning the merge thread");
        Ok(BufferMerger {
            shared,
            schema,
            options,
            thread: Some(thread),
        })
    }

    /// A fresh memory file for the calling thread.
    pub fn get_file(&self) -> Result<MemFileHandle> {
        if self.thread.is_none() || self.shared.poisoned.load(Ordering::SeqCst) {
            return Err(Error::MergerClosed);
        }
        self.shared.live_handles.fetch_add(1, Ordering::SeqCst);
        let buffers = self
            .schema
            .columns()
            .iter()
            .enumerate()
            .map(|(id, c)| ColumnBuffer::new(id as u32, c.type_code))
            .collect();
        Ok(MemFileHandle {
            shared: Arc::clone(&self.shared),
            schema: self.schema.clone(),
            options: self.options,
            buffers,
            sealed: vec![Vec::new(); self.schema.len()],
            rows: 0,
            closed: false,
        })
    }

    /// Closed memory files waiting to be merged.
    pub fn queued_files(&self) -> usize {
        self.shared.queue.len()
    }

    /// Bytes held by waiting memory files; bounded by
    /// `queue_capacity * max memory file size` plus what workers hold.
    pub fn queued_bytes(&self) -> usize {
        self.shared.queue.queued_bytes()
    }

    /// Drains the queue, finalizes the output and returns the summary and
    /// sink. All handles must be closed first; otherwise the merger is
    /// left running and [`Error::HandlesOutstanding`] reports how many
    /// remain.
    pub fn close(&mut self) -> Result<(WriteSummary, W)> {
        if self.thread.is_none() {
            return Err(Error::MergerClosed);
        }
        let live = self.shared.live_handles.load(Ordering::SeqCst);
        if live > 0 {
            return Err(Error::HandlesOutstanding(live));
        }
        let thread = self.thread.take().expect("checked above");
        self.shared.queue.close();
        match thread.join() {
            Ok(result) => result,
            Err(panic) => std::panic::resume_unwind(panic),
        }
    }
}

impl<W: Write + Send + 'static> Drop for BufferMerger<W> {
    fn drop(&mut self) {
        if let Some(thread) = self.thread.take() {
            self.shared.queue.close();
            let _ = thread.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::CodecId;
    use crate::columns::ColumnValues;
    use crate::format::{Column, TypeCode};
    use crate::reader::{FileReader, ReadOptions};

    fn schema() -> Schema {
        Schema::new(vec![Column::new("val", TypeCode::I64)]).unwrap()
    }

    fn options() -> WriterOptions {
        WriterOptions {
            codec: CodecId::STORE,
            ..WriterOptions::with_threads(1)
        }
    }

    #[test]
    fn sequential_handles_concatenate_in_close_order() {
        let mut merger = BufferMerger::create(Vec::new(), schema(), options(), 4).unwrap();
        for chunk in [0..3i64, 3..5i64] {
            let mut handle = merger.get_file().unwrap();
            for v in chunk {
                handle.append_row(&[Value::I64(v)]).unwrap();
            }
            handle.close().unwrap();
        }
        let (summary, bytes) = merger.close().unwrap();
        assert_eq!(summary.total_entries, 5);
        let reader = FileReader::open(bytes, ReadOptions::sequential()).unwrap();
        assert_eq!(
            reader.read_column("val").unwrap(),
            ColumnValues::I64(vec![0, 1, 2, 3, 4])
        );
    }

    #[test]
    fn outstanding_handle_blocks_close() {
        let mut merger = BufferMerger::create(Vec::new(), schema(), options(), 4).unwrap();
        let handle = merger.get_file().unwrap();
        assert!(matches!(merger.close(), Err(Error::HandlesOutstanding(1))));
        handle.close().unwrap();
        let (summary, _) = merger.close().unwrap();
        assert_eq!(summary.total_entries, 0);
        assert!(matches!(merger.close(), Err(Error::MergerClosed)));
        assert!(matches!(merger.get_file(), Err(Error::MergerClosed)));
    }

    #[test]
    fn empty_handles_enqueue_nothing() {
        let mut merger = BufferMerger::create(Vec::new(), schema(), options(), 4).unwrap();
        merger.get_file().unwrap().close().unwrap();
        merger.get_file().unwrap().close().unwrap();
        let (summary, bytes) = merger.close().unwrap();
        assert_eq!(summary.total_entries, 0);
        assert_eq!(summary.baskets, 0);
        let reader = FileReader::open(bytes, ReadOptions::sequential()).unwrap();
        assert_eq!(reader.total_entries(), 0);
    }

    #[test]
    fn dropped_handle_still_merges() {
        let mut merger = BufferMerger::create(Vec::new(), schema(), options(), 4).unwrap();
        {
            let mut handle = merger.get_file().unwrap();
            handle.append_row(&[Value::I64(9)]).unwrap();
        }
        let (summary, bytes) = merger.close().unwrap();
        assert_eq!(summary.total_entries, 1);
        let reader = FileReader::open(bytes, ReadOptions::sequential()).unwrap();
        assert_eq!(reader.read_column("val").unwrap(), ColumnValues::I64(vec![9]));
    }

    #[test]
    fn closed_handle_rejects_use() {
        let merger = BufferMerger::create(Vec::new(), schema(), options(), 4).unwrap();
        let mut handle = merger.get_file().unwrap();
        handle.append_row(&[Value::I64(1)]).unwrap();
        handle.close_inner().unwrap();
        assert!(matches!(handle.close_inner(), Err(Error::HandleClosed)));
        assert!(matches!(
            handle.append_row(&[Value::I64(2)]),
            Err(Error::HandleClosed)
        ));
    }

    #[derive(Debug)]
    struct FailAfter {
        remaining: usize,
    }

    impl std::io::Write for FailAfter {
        fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
            if self.remaining == 0 {
                return Err(std::io::Error::other("sink full"));
            }
            let n = buf.len().min(self.remaining);
            self.remaining -= n;
            Ok(n)
        }
        fn flush(&mut self) -> std::io::Result<()> {
            Ok(())
        }
    }

    #[test]
    fn merge_thread_failure_poisons_the_merger() {
        // Room for the file header only: the first merged basket fails.
        let sink = FailAfter { remaining: 8 };
        let mut merger = BufferMerger::create(sink, schema(), options(), 4).unwrap();
        let mut handle = merger.get_file().unwrap();
        handle.append_row(&[Value::I64(1)]).unwrap();
        handle.close().unwrap();
        match merger.close() {
            Err(Error::Sink(_)) => {}
            other => panic!("expected the sink error to surface, got {other:?}"),
        }
        assert!(matches!(merger.get_file(), Err(Error::MergerClosed)));
    }
}
