//! Reading basket files: sequential, column-parallel, and basket-pipelined.
//!
//! A [`FileReader`] decodes metadata once at open time and is immutable
//! afterwards; all reads are positional, so one reader can serve many
//! threads. Reads are selective: only the byte ranges of the requested
//! columns' baskets are touched.

use std::collections::{HashMap, HashSet};

use crate::codec::{self, CodecId};
use crate::columns::{deserialize_values, ColumnValues};
use crate::error::{BoxedError, Error, Result};
use crate::format::{
    decode_trailer, BasketHeader, BasketLocation, FileHeader, Footer, Schema, BASKET_HEADER_LEN,
    FILE_HEADER_LEN,
};
use crate::pool::{first_error, for_each_ordered, run_tasks};
use crate::source::ByteSource;

/// Knobs for the parallel read paths.
#[derive(Debug, Clone, Copy)]
pub struct ReadOptions {
    /// Master switch: when false every operation runs sequentially and
    /// returns identical results.
    pub imt_enabled: bool,
    /// Worker pool size for parallel operations.
    pub thread_count: usize,
    /// Baskets a pipelined read may fetch and decode ahead of the
    /// consumer; bounds pipeline memory to `window` decoded baskets.
    pub pipeline_window: usize,
}

impl ReadOptions {
    /// Parallel defaults for `threads` workers.
    pub fn with_threads(threads: usize) -> ReadOptions {
        ReadOptions {
            imt_enabled: true,
            thread_count: threads,
            pipeline_window: 2 * threads.max(1),
        }
    }

    /// Sequential execution regardless of hardware.
    pub fn sequential() -> ReadOptions {
        ReadOptions {
            imt_enabled: false,
            ..ReadOptions::with_threads(1)
        }
    }

    fn validate(&self) -> Result<()> {
        if self.thread_count == 0 {
            return Err(Error::InvalidArgument("thread_count must be positive".into()));
        }
        if self.pipeline_window == 0 {
            return Err(Error::InvalidArgument(
                "pipeline_window must be positive".into(),
            ));
        }
        Ok(())
    }

    fn effective_threads(&self) -> usize {
        if self.imt_enabled {
            self.thread_count
        } else {
            1
        }
    }
}

impl Default for ReadOptions {
    fn default() -> Self {
        ReadOptions::with_threads(crate::default_thread_count())
    }
}

/// Outcome of an integrity sweep: every basket's checksum verified,
/// failures reported as data rather than errors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegrityReport {
    pub baskets_total: usize,
    pub failures: Vec<BasketFailure>,
}

impl IntegrityReport {
    pub fn is_ok(&self) -> bool {
        self.failures.is_empty()
    }
}

/// One basket that failed verification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasketFailure {
    pub column_id: u32,
    pub first_entry: u64,
    pub reason: String,
}

/// Decoder over a positional byte source.
pub struct FileReader<S: ByteSource> {
    source: S,
    source_size: u64,
    header: FileHeader,
    footer: Footer,
    options: ReadOptions,
}

impl<S: ByteSource> FileReader<S> {
    /// Decodes and validates metadata; no basket payload is read.
    pub fn open(source: S, options: ReadOptions) -> Result<FileReader<S>> {
        options.validate()?;
        let size = source.size().map_err(Error::Source)?;
        if size < FILE_HEADER_LEN as u64 {
            return Err(Error::MalformedHeader(format!(
                "file too short for header: {size} bytes"
            )));
        }
        let mut head = [0u8; FILE_HEADER_LEN];
        source.read_exact_at(0, &mut head).map_err(Error::Source)?;
        let header = FileHeader::decode(&head)?;

        if size < (FILE_HEADER_LEN + 8) as u64 {
            return Err(Error::MalformedFooter(format!(
                "file too short for a footer: {size} bytes"
            )));
        }
        let mut trailer = [0u8; 8];
        source
            .read_exact_at(size - 8, &mut trailer)
            .map_err(Error::Source)?;
        let footer_len = decode_trailer(&trailer)? as u64;
        if footer_len > size - 8 - FILE_HEADER_LEN as u64 {
            return Err(Error::MalformedFooter(format!(
                "footer length {footer_len} exceeds file"
            )));
        }
        let mut body = vec![0u8; footer_len as usize];
        source
            .read_exact_at(size - 8 - footer_len, &mut body)
            .map_err(Error::Source)?;
        let footer = Footer::decode_body(&body)?;

        Ok(FileReader {
            source,
            source_size: size,
            header,
            footer,
            options,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.footer.schema
    }

    pub fn total_entries(&self) -> u64 {
        self.footer.total_entries
    }

    pub fn format_version(&self) -> u32 {
        self.header.version
    }

    pub fn options(&self) -> &ReadOptions {
        &self.options
    }

    /// Basket count per column, summed over the schema.
    pub fn n_baskets(&self) -> usize {
        self.footer.index.n_baskets()
    }

    fn column_id(&self, name: &str) -> Result<u32> {
        self.footer
            .schema
            .column_id(name)
            .ok_or_else(|| Error::NoSuchColumn(name.to_string()))
    }

    /// Reads the raw bytes of one basket and checks header consistency and
    /// payload CRC. Returns the parsed header and compressed payload.
    fn fetch_basket(&self, column_id: u32, loc: &BasketLocation) -> Result<(BasketHeader, Vec<u8>)> {
        let header_end = loc.file_offset + BASKET_HEADER_LEN as u64;
        if header_end > self.source_size {
            return Err(Error::Truncated {
                needed: header_end,
                available: self.source_size,
            });
        }
        let mut head = [0u8; BASKET_HEADER_LEN];
        self.source
            .read_exact_at(loc.file_offset, &mut head)
            .map_err(Error::Source)?;
        let header = BasketHeader::decode(&head)?;
        if header.column_id != column_id
            || header.first_entry != loc.first_entry
            || header.n_entries != loc.n_entries
        {
            return Err(Error::IndexInconsistent(format!(
                "basket header (column {}, entry {}, {} entries) disagrees with index \
                 (column {}, entry {}, {} entries)",
                header.column_id,
                header.first_entry,
                header.n_entries,
                column_id,
                loc.first_entry,
                loc.n_entries
            )));
        }
        let payload_end = header_end + header.compressed_len as u64;
        if payload_end > self.source_size {
            return Err(Error::Truncated {
                needed: payload_end,
                available: self.source_size,
            });
        }
        let mut payload = vec![0u8; header.compressed_len as usize];
        self.source
            .read_exact_at(header_end, &mut payload)
            .map_err(Error::Source)?;
        crate::format::verify_payload(&header, &payload)?;
        Ok((header, payload))
    }

    /// Fetches, checks, decompresses and deserializes one basket.
    fn read_basket(&self, column_id: u32, loc: &BasketLocation) -> Result<ColumnValues> {
        let run = || -> Result<ColumnValues> {
            let (header, payload) = self.fetch_basket(column_id, loc)?;
            let data = codec::decompress(
                CodecId(header.codec_id),
                &payload,
                header.uncompressed_len,
            )?;
            deserialize_values(
                self.footer.schema.column(column_id).type_code,
                &data,
                header.n_entries,
            )
        };
        run().map_err(|e| e.in_basket(column_id, loc.first_entry))
    }

    fn read_column_by_id(&self, column_id: u32) -> Result<ColumnValues> {
        let type_code = self.footer.schema.column(column_id).type_code;
        let mut values = ColumnValues::new(type_code);
        for loc in self.footer.index.column(column_id) {
            let basket = self.read_basket(column_id, loc)?;
            values.extend_from(&basket)?;
        }
        Ok(values)
    }

    /// Decodes one column in basket order, touching only that column's
    /// byte ranges plus the metadata.
    pub fn read_column(&self, name: &str) -> Result<ColumnValues> {
        self.read_column_by_id(self.column_id(name)?)
    }

    /// Decodes several columns, one work item per column, on a pool of
    /// `thread_count` workers. Results are identical to sequential
    /// [`FileReader::read_column`] calls. When several columns fail, the
    /// error of the schema-earliest failing column is reported after all
    /// tasks settle; no partial map is returned.
    pub fn read_columns_parallel(&self, names: &[&str]) -> Result<HashMap<String, ColumnValues>> {
        let mut seen = HashSet::new();
        for name in names {
            if !seen.insert(*name) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate column {name:?} in request"
                )));
            }
        }
        let mut ids = Vec::with_capacity(names.len());
        for name in names {
            ids.push(self.column_id(name)?);
        }
        // Claim in schema order so the error policy matches task order.
        ids.sort_unstable();
        let results = run_tasks(ids.len(), self.options.effective_threads(), |i| {
            self.read_column_by_id(ids[i])
        });
        let values = first_error(results)?;
        Ok(ids
            .into_iter()
            .zip(values)
            .map(|(id, vals)| (self.footer.schema.column(id).name.clone(), vals))
            .collect())
    }

    /// Streams one column basket by basket, in entry order, to `consumer`
    /// on the calling thread, while up to `pipeline_window` later baskets
    /// are fetched and decoded concurrently. Returns the entry count
    /// delivered. A consumer error aborts outstanding work and surfaces as
    /// [`Error::Consumer`].
    pub fn read_column_pipelined<F>(&self, name: &str, mut consumer: F) -> Result<u64>
    where
        F: FnMut(u64, ColumnValues) -> std::result::Result<(), BoxedError>,
    {
        let column_id = self.column_id(name)?;
        let baskets = self.footer.index.column(column_id);
        let mut delivered = 0u64;
        for_each_ordered(
            baskets.len(),
            self.options.effective_threads(),
            self.options.pipeline_window,
            |i| self.read_basket(column_id, &baskets[i]),
            |i, values| {
                let n = values.len() as u64;
                consumer(baskets[i].first_entry, values).map_err(Error::Consumer)?;
                delivered += n;
                Ok(())
            },
        )?;
        Ok(delivered)
    }

    /// CRC-checks every basket without decompressing or deserializing,
    /// in parallel across baskets when IMT is on. Failures are data in
    /// the report, not errors.
    pub fn verify(&self) -> IntegrityReport {
        let mut targets = Vec::new();
        for id in 0..self.footer.schema.len() as u32 {
            for loc in self.footer.index.column(id) {
                targets.push((id, *loc));
            }
        }
        let results = run_tasks(targets.len(), self.options.effective_threads(), |i| {
            let (column_id, loc) = targets[i];
            Ok(self.fetch_basket(column_id, &loc).err().map(|e| BasketFailure {
                column_id,
                first_entry: loc.first_entry,
                reason: e.to_string(),
            }))
        });
        let failures = results
            .into_iter()
            .filter_map(|r| r.expect("verification tasks are infallible"))
            .collect();
        IntegrityReport {
            baskets_total: targets.len(),
            failures,
        }
    }
}
