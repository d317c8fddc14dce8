//! Parallel merging of basket files into one output.
//!
//! The merge never re-compresses: baskets are copied verbatim with their
//! entry ranges rebased, which is exactly the operation the append-only
//! layout was chosen to make cheap. Inputs are loaded and checksum-verified
//! on a pool of `jobs` workers while a single consuming thread appends them
//! strictly in input order, so the output is deterministic for a given
//! input list no matter the worker count.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::format::{decode_basket, decode_metadata, Footer};
use crate::pool::{first_error, for_each_ordered, run_tasks};
use crate::reader::{FileReader, ReadOptions};
use crate::writer::{FileWriter, WriteSummary, WriterOptions};

/// A planned merge of `inputs` (in order) into `output`.
#[derive(Debug, Clone)]
pub struct MergeJob {
    pub inputs: Vec<PathBuf>,
    pub output: PathBuf,
    /// Worker count for input validation and loading.
    pub jobs: usize,
    pub options: WriterOptions,
}

impl MergeJob {
    pub fn new(inputs: Vec<PathBuf>, output: PathBuf) -> MergeJob {
        MergeJob {
            inputs,
            output,
            jobs: crate::default_thread_count(),
            options: WriterOptions::default(),
        }
    }
}

struct LoadedInput {
    bytes: Vec<u8>,
    footer: Footer,
}

fn with_path(path: &Path, err: std::io::Error) -> Error {
    Error::Source(std::io::Error::new(
        err.kind(),
        format!("{}: {err}", path.display()),
    ))
}

/// Reads one input fully and checks it: metadata decodes, the schema
/// matches the job's, and every basket agrees with the index and passes
/// its CRC. Failures name the file, so a bad input is identifiable in a
/// long input list.
fn load_input(path: &Path, schema_bytes: &[u8]) -> Result<LoadedInput> {
    load_input_inner(path, schema_bytes).map_err(|e| match e {
        e @ Error::SchemaMismatch { .. } => e,
        e => e.in_file(path),
    })
}

fn load_input_inner(path: &Path, schema_bytes: &[u8]) -> Result<LoadedInput> {
    let bytes = std::fs::read(path).map_err(Error::Source)?;
    let (_, footer) = decode_metadata(&bytes)?;
    if footer.schema.encoded() != schema_bytes {
        return Err(Error::SchemaMismatch {
            path: path.display().to_string(),
            detail: "schema differs from the first input".into(),
        });
    }
    for id in 0..footer.schema.len() as u32 {
        for loc in footer.index.column(id) {
            let offset = usize::try_from(loc.file_offset).map_err(|_| Error::Truncated {
                needed: loc.file_offset,
                available: bytes.len() as u64,
            })?;
            let (header, _) = decode_basket(&bytes, offset)?;
            if header.column_id != id
                || header.first_entry != loc.first_entry
                || header.n_entries != loc.n_entries
            {
                return Err(Error::IndexInconsistent(format!(
                    "basket at offset {} disagrees with the index",
                    loc.file_offset
                )));
            }
        }
    }
    Ok(LoadedInput { bytes, footer })
}

/// Schemas of all inputs, fetched in parallel without loading payloads.
fn input_schemas(job: &MergeJob) -> Result<Vec<Vec<u8>>> {
    let results = run_tasks(job.inputs.len(), job.jobs, |i| {
        let path = &job.inputs[i];
        let file = File::open(path).map_err(|e| with_path(path, e))?;
        let reader = FileReader::open(file, ReadOptions::sequential())?;
        Ok(reader.schema().encoded())
    });
    first_error(results)
}

/// Runs a merge job. The output file is created only after every input's
/// schema has been checked, and is removed again if the merge fails
/// midway.
pub fn run_merge(job: &MergeJob) -> Result<WriteSummary> {
    if job.inputs.is_empty() {
        return Err(Error::InvalidArgument("no input files given".into()));
    }
    if job.jobs == 0 {
        return Err(Error::InvalidArgument("jobs must be positive".into()));
    }
    let output_abs = std::path::absolute(&job.output).map_err(Error::Sink)?;
    for input in &job.inputs {
        let input_abs = std::path::absolute(input).map_err(|e| with_path(input, e))?;
        if input_abs == output_abs {
            return Err(Error::InvalidArgument(format!(
                "output {} is also an input",
                job.output.display()
            )));
        }
    }

    let schemas = input_schemas(job)?;
    let schema_bytes = &schemas[0];
    for (i, other) in schemas.iter().enumerate().skip(1) {
        if other != schema_bytes {
            return Err(Error::SchemaMismatch {
                path: job.inputs[i].display().to_string(),
                detail: format!("schema differs from {}", job.inputs[0].display()),
            });
        }
    }

    let first = File::open(&job.inputs[0]).map_err(|e| with_path(&job.inputs[0], e))?;
    let schema = FileReader::open(first, ReadOptions::sequential())?
        .schema()
        .clone();

    let sink = BufWriter::new(File::create(&job.output).map_err(Error::Sink)?);
    let mut writer = FileWriter::create(sink, schema, job.options)?;
    let merged = for_each_ordered(
        job.inputs.len(),
        job.jobs,
        2 * job.jobs,
        |i| load_input(&job.inputs[i], schema_bytes),
        |_, input| {
            let base = writer.entry_base();
            for id in 0..input.footer.schema.len() as u32 {
                for loc in input.footer.index.column(id) {
                    let (mut header, payload) =
                        decode_basket(&input.bytes, loc.file_offset as usize)
                            .expect("basket was verified at load");
                    header.first_entry += base;
                    writer.append_raw(&header, payload)?;
                }
            }
            writer.add_merged_entries(input.footer.total_entries);
            Ok(())
        },
    )
    .and_then(|()| writer.close());

    match merged {
        Ok(summary) => Ok(summary),
        Err(e) => {
            drop(writer);
            let _ = std::fs::remove_file(&job.output);
            Err(e)
        }
    }
}
