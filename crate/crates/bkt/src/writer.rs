//! Writing basket files.
//!
//! [`FileWriter`] streams to any `io::Write` sink in one pass: header,
//! then baskets as they seal, then the footer at close. Offsets are
//! tracked by counting written bytes, so the sink never needs to seek.
//! Sealing serializes nothing twice: column buffers already hold encoded
//! bytes, and compression of due baskets fans out over a worker pool.

use std::io::Write;

use crate::codec::{self, CodecId, CompressionLevel};
use crate::columns::{ColumnBuffer, PendingBasket, Value};
use crate::error::{Error, Result};
use crate::format::{
    crc32, BasketHeader, BasketIndex, BasketLocation, FileHeader, Footer, Schema,
    BASKET_HEADER_LEN,
};
use crate::pool::{first_error, run_tasks};
use crate::sync::assert_unlocked;

/// Knobs for writing. The defaults match the file format's sweet spot:
/// baskets around 32 KiB compress well without bloating the index.
#[derive(Debug, Clone, Copy)]
pub struct WriterOptions {
    /// A column's basket seals once its pending encoded bytes reach this.
    pub basket_target_bytes: u32,
    pub codec: CodecId,
    pub level: CompressionLevel,
    /// When false, sealing compresses on the calling thread.
    pub imt_enabled: bool,
    pub thread_count: usize,
}

impl WriterOptions {
    pub const DEFAULT_BASKET_TARGET: u32 = 32 * 1024;

    pub fn with_threads(threads: usize) -> WriterOptions {
        WriterOptions {
            basket_target_bytes: Self::DEFAULT_BASKET_TARGET,
            codec: CodecId::DEFLATE,
            level: CompressionLevel::DEFAULT,
            imt_enabled: true,
            thread_count: threads,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.basket_target_bytes == 0 {
            return Err(Error::InvalidArgument(
                "basket_target_bytes must be positive".into(),
            ));
        }
        if self.thread_count == 0 {
            return Err(Error::InvalidArgument("thread_count must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn effective_threads(&self) -> usize {
        if self.imt_enabled {
            self.thread_count
        } else {
            1
        }
    }
}

impl Default for WriterOptions {
    fn default() -> Self {
        WriterOptions::with_threads(crate::default_thread_count())
    }
}

/// Totals reported by a completed writer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WriteSummary {
    pub total_entries: u64,
    pub baskets: u64,
    /// Physical output size including header, baskets and footer.
    pub bytes_written: u64,
}

/// A compressed basket ready to hit a sink.
#[derive(Debug, Clone)]
pub(crate) struct SealedBasket {
    pub header: BasketHeader,
    pub payload: Vec<u8>,
}

impl SealedBasket {
    pub(crate) fn encoded_len(&self) -> usize {
        BASKET_HEADER_LEN + self.payload.len()
    }
}

/// Compresses pending baskets on up to `workers` threads. Output order
/// matches input order; errors keep the lowest input index.
pub(crate) fn seal_pending(
    pending: Vec<PendingBasket>,
    codec: CodecId,
    level: CompressionLevel,
    workers: usize,
) -> Result<Vec<SealedBasket>> {
    let results = run_tasks(pending.len(), workers, |i| {
        let p = &pending[i];
        seal_one(p, codec, level).map_err(|e| e.in_basket(p.column_id, p.first_entry))
    });
    first_error(results)
}

fn seal_one(p: &PendingBasket, codec: CodecId, level: CompressionLevel) -> Result<SealedBasket> {
    let payload = codec::compress(codec, level, &p.bytes)?;
    if payload.len() as u64 >= u32::MAX as u64 {
        return Err(Error::ValueOutOfDomain(
            "compressed basket exceeds the 4 GiB payload limit".into(),
        ));
    }
    let header = BasketHeader {
        column_id: p.column_id,
        codec_id: codec.0,
        n_entries: p.n_entries,
        first_entry: p.first_entry,
        uncompressed_len: p.bytes.len() as u32,
        compressed_len: payload.len() as u32,
        payload_crc: crc32(&payload),
    };
    Ok(SealedBasket { header, payload })
}

/// Checks a row against the schema before anything is buffered, so a
/// rejected row leaves the writer untouched.
pub(crate) fn validate_row(schema: &Schema, row: &[Value]) -> Result<()> {
    if row.len() != schema.len() {
        return Err(Error::TypeMismatch(format!(
            "row has {} values, schema has {} columns",
            row.len(),
            schema.len()
        )));
    }
    for (value, column) in row.iter().zip(schema.columns()) {
        if value.type_code() != column.type_code {
            return Err(Error::TypeMismatch(format!(
                "column {:?} expects {}, row supplies {}",
                column.name,
                column.type_code.name(),
                value.type_code().name()
            )));
        }
        if let Value::Bytes(b) = value {
            if b.len() as u64 >= u32::MAX as u64 {
                return Err(Error::ValueOutOfDomain(format!(
                    "bytes entry of {} bytes exceeds the 4 GiB entry limit",
                    b.len()
                )));
            }
        }
    }
    Ok(())
}

/// One-pass basket file writer over a byte sink.
pub struct FileWriter<W: Write> {
    sink: W,
    schema: Schema,
    options: WriterOptions,
    buffers: Vec<ColumnBuffer>,
    index: BasketIndex,
    total_entries: u64,
    baskets: u64,
    offset: u64,
    closed: bool,
}

impl<W: Write> FileWriter<W> {
    /// Writes the file header immediately; an immediate [`close`] yields a
    /// valid empty file.
    ///
    /// [`close`]: FileWriter::close
    pub fn create(mut sink: W, schema: Schema, options: WriterOptions) -> Result<FileWriter<W>> {
        options.validate()?;
        let header = FileHeader::default().encode();
        sink.write_all(&header).map_err(Error::Sink)?;
        let buffers = schema
            .columns()
            .iter()
            .enumerate()
            .map(|(id, c)| ColumnBuffer::new(id as u32, c.type_code))
            .collect();
        let index = BasketIndex::new(schema.len());
        Ok(FileWriter {
            sink,
            schema,
            options,
            buffers,
            index,
            total_entries: 0,
            baskets: 0,
            offset: header.len() as u64,
            closed: false,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    /// Entries appended (or merged in) so far.
    pub(crate) fn entry_base(&self) -> u64 {
        self.total_entries
    }

    fn check_open(&self) -> Result<()> {
        if self.closed {
            Err(Error::ClosedWriter)
        } else {
            Ok(())
        }
    }

    /// Appends one row atomically: it is validated against the schema
    /// up front and either lands in every column or in none. Sealing
    /// triggers automatically once any column crosses the basket target.
    pub fn append_row(&mut self, row: &[Value]) -> Result<()> {
        self.check_open()?;
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
        self.total_entries += 1;
        let target = self.options.basket_target_bytes;
        if self.buffers.iter().any(|b| b.plan_seal(target, false)) {
            self.seal_baskets(false)?;
        }
        Ok(())
    }

    pub fn append_rows(&mut self, rows: &[Vec<Value>]) -> Result<()> {
        for row in rows {
            self.append_row(row)?;
        }
        Ok(())
    }

    /// Seals every column whose pending bytes reached the target, or all
    /// non-empty columns when `force` is set. Baskets are compressed in
    /// parallel when IMT is on, then written in ascending column order.
    /// Returns the number of baskets written.
    pub fn seal_baskets(&mut self, force: bool) -> Result<usize> {
        self.check_open()?;
        let target = self.options.basket_target_bytes;
        let pending: Vec<PendingBasket> = self
            .buffers
            .iter_mut()
            .filter(|b| b.plan_seal(target, force))
            .map(|b| b.take_pending())
            .collect();
        let sealed = seal_pending(
            pending,
            self.options.codec,
            self.options.level,
            self.options.effective_threads(),
        )?;
        let n = sealed.len();
        for basket in &sealed {
            self.write_sealed(basket)?;
        }
        Ok(n)
    }

    fn write_sealed(&mut self, basket: &SealedBasket) -> Result<()> {
        assert_unlocked("sink write");
        self.sink
            .write_all(&basket.header.encode())
            .map_err(Error::Sink)?;
        self.sink.write_all(&basket.payload).map_err(Error::Sink)?;
        self.index.push(
            basket.header.column_id,
            BasketLocation {
                file_offset: self.offset,
                first_entry: basket.header.first_entry,
                n_entries: basket.header.n_entries,
            },
        );
        self.offset += basket.encoded_len() as u64;
        self.baskets += 1;
        Ok(())
    }

    /// Appends an already-sealed basket verbatim. The caller is
    /// responsible for entry accounting via [`add_merged_entries`].
    ///
    /// [`add_merged_entries`]: FileWriter::add_merged_entries
    pub(crate) fn append_raw(&mut self, header: &BasketHeader, payload: &[u8]) -> Result<()> {
        self.check_open()?;
        if header.column_id as usize >= self.schema.len() {
            return Err(Error::IndexInconsistent(format!(
                "basket column {} outside schema of {} columns",
                header.column_id,
                self.schema.len()
            )));
        }
        self.write_sealed(&SealedBasket {
            header: *header,
            payload: payload.to_vec(),
        })
    }

    pub(crate) fn add_merged_entries(&mut self, n: u64) {
        self.total_entries += n;
    }

    /// Splices a memory file's baskets in, rebasing their entry ranges
    /// onto the end of this writer. Basket `first_entry` values are local
    /// to the memory file (they start at zero).
    pub(crate) fn merge_baskets(
        &mut self,
        per_column: &[Vec<SealedBasket>],
        local_entries: u64,
    ) -> Result<()> {
        let base = self.entry_base();
        for baskets in per_column {
            for basket in baskets {
                let mut header = basket.header;
                header.first_entry += base;
                self.append_raw(&header, &basket.payload)?;
            }
        }
        self.add_merged_entries(local_entries);
        Ok(())
    }

    /// Seals everything still pending, writes the footer and flushes.
    /// The writer rejects further use afterwards.
    pub fn close(&mut self) -> Result<WriteSummary> {
        self.check_open()?;
        self.seal_baskets(true)?;
        let footer = Footer {
            schema: self.schema.clone(),
            index: std::mem::take(&mut self.index),
            total_entries: self.total_entries,
        };
        let bytes = footer.encode()?;
        assert_unlocked("sink write");
        self.sink.write_all(&bytes).map_err(Error::Sink)?;
        self.sink.flush().map_err(Error::Sink)?;
        self.offset += bytes.len() as u64;
        self.closed = true;
        Ok(WriteSummary {
            total_entries: self.total_entries,
            baskets: self.baskets,
            bytes_written: self.offset,
        })
    }

    /// Recovers the sink, typically after [`close`].
    ///
    /// [`close`]: FileWriter::close
    pub fn into_sink(self) -> W {
        self.sink
    }
}
