//! Benchmark workloads: deterministic data generation, timed write runs
//! through the buffer merger, and timed reads in each strategy.
//!
//! Timing brackets only the I/O phase under study. Data generation runs
//! before the clock starts, and verification after it stops, so reports
//! measure the pipeline rather than the harness.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use crate::codec::{CodecId, CompressionLevel};
use crate::columns::Value;
use crate::error::{Error, Result};
use crate::format::{Column, Schema, TypeCode};
use crate::merger::BufferMerger;
use crate::reader::{FileReader, ReadOptions};
use crate::writer::WriterOptions;

pub const DEFAULT_SEED: u64 = 42;

/// Rows per memory file in write benchmarks: 2^20 f64 entries, so each
/// handle cycles 8 MiB through the merge queue.
pub const BENCH_MEMFILE_ROWS: usize = 1 << 20;

/// splitmix64: tiny, splittable, and passes BigCrush; entirely adequate
/// for generating benchmark payloads reproducibly.
#[derive(Debug, Clone, Copy)]
pub struct SplitMix64 {
    state: u64,
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

impl SplitMix64 {
    pub fn new(seed: u64) -> SplitMix64 {
        SplitMix64 { state: seed }
    }

    /// The generator positioned as if `index` values had been drawn
    /// already: the state advances by a fixed stride per draw, so any
    /// point in the stream is reachable in O(1). This is what lets each
    /// benchmark worker generate its own slice of one global sequence.
    pub fn seek(seed: u64, index: u64) -> SplitMix64 {
        SplitMix64 {
            state: seed.wrapping_add(index.wrapping_mul(GOLDEN)),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1) with 53 significant bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Process CPU time (user + system), for judging core saturation.
#[cfg(unix)]
pub fn process_cpu_seconds() -> Option<f64> {
    fn seconds(t: libc::timeval) -> f64 {
        t.tv_sec as f64 + t.tv_usec as f64 * 1e-6
    }
    let mut usage: libc::rusage = unsafe { std::mem::zeroed() };
    if unsafe { libc::getrusage(libc::RUSAGE_SELF, &mut usage) } == 0 {
        Some(seconds(usage.ru_utime) + seconds(usage.ru_stime))
    } else {
        None
    }
}

#[cfg(not(unix))]
pub fn process_cpu_seconds() -> Option<f64> {
    None
}

fn cpu_delta(before: Option<f64>, after: Option<f64>) -> Option<f64> {
    match (before, after) {
        (Some(b), Some(a)) => Some(a - b),
        _ => None,
    }
}

/// One-line hardware summary for reports.
pub fn machine_summary() -> String {
    format!(
        "{}-{}-{}core",
        std::env::consts::OS,
        std::env::consts::ARCH,
        crate::default_thread_count()
    )
}

#[derive(Debug, Clone)]
pub struct WriteBenchConfig {
    pub entries: u64,
    pub threads: usize,
    pub codec: CodecId,
    pub level: CompressionLevel,
    pub seed: u64,
    pub basket_target_bytes: u32,
}

impl WriteBenchConfig {
    pub fn new(entries: u64, threads: usize) -> WriteBenchConfig {
        WriteBenchConfig {
            entries,
            threads,
            codec: CodecId::DEFLATE,
            level: CompressionLevel::DEFAULT,
            seed: DEFAULT_SEED,
            basket_target_bytes: WriterOptions::DEFAULT_BASKET_TARGET,
        }
    }
}

/// Where a write benchmark lands its file.
#[derive(Debug, Clone)]
pub enum BenchSink {
    Memory,
    Path(PathBuf),
}

#[derive(Debug, Clone, Copy)]
pub struct WriteMeasurement {
    pub wall_seconds: f64,
    pub cpu_seconds: Option<f64>,
    pub bytes_uncompressed: u64,
    /// Physical size of the produced file.
    pub bytes_written: u64,
    pub entries: u64,
}

fn bench_schema() -> Schema {
    Schema::new(vec![Column::new("value", TypeCode::F64)]).expect("static schema")
}

/// The global value sequence for `seed`, split into one slice per worker.
fn generate_values(entries: u64, threads: usize, seed: u64) -> Vec<Vec<f64>> {
    let per_worker = entries.div_ceil(threads as u64);
    (0..threads as u64)
        .map(|w| {
            let lo = (w * per_worker).min(entries);
            let hi = ((w + 1) * per_worker).min(entries);
            let mut rng = SplitMix64::seek(seed, lo);
            (lo..hi).map(|_| rng.next_f64()).collect()
        })
        .collect()
}

fn write_chunk<W: Write + Send + 'static>(
    merger: &BufferMerger<W>,
    chunk: &[f64],
) -> Result<()> {
    for batch in chunk.chunks(BENCH_MEMFILE_ROWS) {
        let mut handle = merger.get_file()?;
        for &x in batch {
            handle.append_row(&[Value::F64(x)])?;
        }
        handle.close()?;
    }
    Ok(())
}

fn timed_write<W: Write + Send + 'static>(
    sink: W,
    config: &WriteBenchConfig,
    chunks: &[Vec<f64>],
) -> Result<(WriteMeasurement, W)> {
    let options = WriterOptions {
        basket_target_bytes: config.basket_target_bytes,
        codec: config.codec,
        level: config.level,
        imt_enabled: true,
        thread_count: config.threads,
    };
    options.validate()?;

    let start = Instant::now();
    let cpu_before = process_cpu_seconds();
    let mut merger = BufferMerger::create(sink, bench_schema(), options, 2 * config.threads)?;
    let worker_result: Result<()> = std::thread::scope(|scope| {
        let merger = &merger;
        let workers: Vec<_> = chunks
            .iter()
            .map(|chunk| scope.spawn(move || write_chunk(merger, chunk)))
            .collect();
        let mut first = Ok(());
        for worker in workers {
            let result = worker.join().expect("bench worker panicked");
            if first.is_ok() {
                first = result;
            }
        }
        first
    });
    let close_result = merger.close();
    let wall_seconds = start.elapsed().as_secs_f64();
    let cpu_seconds = cpu_delta(cpu_before, process_cpu_seconds());

    // The merge thread's close error is the root cause when both fail.
    let (summary, sink) = close_result?;
    worker_result?;
    if summary.total_entries != config.entries {
        return Err(Error::LengthMismatch {
            expected: config.entries,
            actual: summary.total_entries,
        });
    }
    Ok((
        WriteMeasurement {
            wall_seconds,
            cpu_seconds,
            bytes_uncompressed: config.entries * 8,
            bytes_written: summary.bytes_written,
            entries: summary.total_entries,
        },
        sink,
    ))
}

fn verify_bench_output(bytes: &[u8]) -> Result<()> {
    let reader = FileReader::open(bytes, ReadOptions::default())?;
    let report = reader.verify();
    if let Some(failure) = report.failures.first() {
        return Err(Error::CorruptStream(format!(
            "benchmark output failed verification ({} of {} baskets): {}",
            report.failures.len(),
            report.baskets_total,
            failure.reason
        )));
    }
    Ok(())
}

/// Writes `config.entries` seed-deterministic f64 values through the
/// buffer merger into an in-memory file, returning the measurement and
/// the verified file bytes.
pub fn write_bench_to_memory(config: &WriteBenchConfig) -> Result<(WriteMeasurement, Vec<u8>)> {
    validate_write_config(config)?;
    let chunks = generate_values(config.entries, config.threads, config.seed);
    let (measurement, bytes) = timed_write(Vec::new(), config, &chunks)?;
    verify_bench_output(&bytes)?;
    Ok((measurement, bytes))
}

fn validate_write_config(config: &WriteBenchConfig) -> Result<()> {
    if config.entries == 0 {
        return Err(Error::InvalidArgument("entries must be at least 1".into()));
    }
    if config.threads == 0 {
        return Err(Error::InvalidArgument("threads must be positive".into()));
    }
    Ok(())
}

/// Runs a write benchmark against the chosen sink. The produced file is
/// re-read and CRC-verified after the clock stops.
pub fn run_write_bench(config: &WriteBenchConfig, sink: &BenchSink) -> Result<WriteMeasurement> {
    match sink {
        BenchSink::Memory => {
            let (measurement, _) = write_bench_to_memory(config)?;
            Ok(measurement)
        }
        BenchSink::Path(path) => {
            validate_write_config(config)?;
            let chunks = generate_values(config.entries, config.threads, config.seed);
            let file = std::fs::File::create(path).map_err(Error::Sink)?;
            let (measurement, sink) = timed_write(std::io::BufWriter::new(file), config, &chunks)?;
            drop(sink);
            let bytes = std::fs::read(path).map_err(Error::Source)?;
            verify_bench_output(&bytes)?;
            Ok(measurement)
        }
    }
}

/// The read strategy under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadMode {
    /// One thread, column after column.
    Sequential,
    /// One task per column on a worker pool.
    Columns,
    /// Basket pipeline with an in-order consumer.
    Pipelined,
}

impl ReadMode {
    pub fn name(self) -> &'static str {
        match self {
            ReadMode::Sequential => "sequential",
            ReadMode::Columns => "columns",
            ReadMode::Pipelined => "pipelined",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReadBenchConfig {
    pub mode: ReadMode,
    pub threads: usize,
    /// Column names to read; `None` reads every column in schema order.
    pub columns: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy)]
pub struct ReadMeasurement {
    pub wall_seconds: f64,
    pub cpu_seconds: Option<f64>,
    /// Uncompressed bytes of the columns actually read.
    pub bytes_uncompressed: u64,
    pub entries: u64,
    /// Order-sensitive fold over every value read; identical across
    /// modes, and the reason the compiler cannot discard the reads.
    pub checksum: u64,
}

/// Runs one read strategy over an in-memory file image. Only the strategy
/// itself is timed; opening the reader is setup.
pub fn run_read_bench(file: &[u8], config: &ReadBenchConfig) -> Result<ReadMeasurement> {
    if config.threads == 0 {
        return Err(Error::InvalidArgument("threads must be positive".into()));
    }
    let options = match config.mode {
        ReadMode::Sequential => ReadOptions::sequential(),
        ReadMode::Columns | ReadMode::Pipelined => ReadOptions::with_threads(config.threads),
    };
    let reader = FileReader::open(file, options)?;
    let names: Vec<String> = match &config.columns {
        Some(names) => names.clone(),
        None => reader
            .schema()
            .columns()
            .iter()
            .map(|c| c.name.clone())
            .collect(),
    };
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();

    let mut checksum = 0u64;
    let mut bytes = 0u64;
    let start = Instant::now();
    let cpu_before = process_cpu_seconds();
    match config.mode {
        ReadMode::Sequential => {
            for name in &name_refs {
                let values = reader.read_column(name)?;
                checksum = values.checksum_fold(checksum);
                bytes += values.encoded_len();
            }
        }
        ReadMode::Columns => {
            let mut map = reader.read_columns_parallel(&name_refs)?;
            for name in &names {
                let values = map.remove(name).expect("parallel read returned all columns");
                checksum = values.checksum_fold(checksum);
                bytes += values.encoded_len();
            }
        }
        ReadMode::Pipelined => {
            for name in &name_refs {
                reader.read_column_pipelined(name, |_, values| {
                    checksum = values.checksum_fold(checksum);
                    bytes += values.encoded_len();
                    Ok(())
                })?;
            }
        }
    }
    let wall_seconds = start.elapsed().as_secs_f64();
    let cpu_seconds = cpu_delta(cpu_before, process_cpu_seconds());
    Ok(ReadMeasurement {
        wall_seconds,
        cpu_seconds,
        bytes_uncompressed: bytes,
        entries: reader.total_entries(),
        checksum,
    })
}

/// Codec of the file's first basket, for report labeling; files with no
/// baskets count as store.
pub fn file_codec_name(file: &[u8]) -> Result<&'static str> {
    let (_, footer) = crate::format::decode_metadata(file)?;
    for id in 0..footer.schema.len() as u32 {
        if let Some(loc) = footer.index.column(id).first() {
            let (header, _) = crate::format::decode_basket(file, loc.file_offset as usize)?;
            return Ok(CodecId(header.codec_id).name());
        }
    }
    Ok(CodecId::STORE.name())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::columns::ColumnValues;

    #[test]
    fn splitmix64_known_answers() {
        // Reference outputs from the published splitmix64 algorithm.
        let mut rng = SplitMix64::new(0);
        assert_eq!(rng.next_u64(), 0xe220_a839_7b1d_cdaf);
        assert_eq!(rng.next_u64(), 0x6e78_9e6a_a1b9_65f4);
        assert_eq!(rng.next_u64(), 0x06c4_5d18_8009_454f);

        let mut rng = SplitMix64::new(42);
        assert_eq!(rng.next_u64(), 0xbdd7_3226_2feb_6e95);
        assert_eq!(rng.next_u64(), 0x28ef_e333_b266_f103);
        assert_eq!(rng.next_u64(), 0x4752_6757_130f_9f52);
    }

    #[test]
    fn f64_mapping_known_answers() {
        let mut rng = SplitMix64::new(42);
        assert_eq!(rng.next_f64(), 0.7415648787718233);
        assert_eq!(rng.next_f64(), 0.1599103928769201);
        assert_eq!(rng.next_f64(), 0.27860113025513866);
        for _ in 0..10_000 {
            let x = rng.next_f64();
            assert!((0.0..1.0).contains(&x));
        }
    }

    #[test]
    fn seek_matches_sequential_draws() {
        let mut rng = SplitMix64::new(7);
        for _ in 0..1000 {
            rng.next_u64();
        }
        let mut jumped = SplitMix64::seek(7, 1000);
        assert_eq!(jumped.next_u64(), rng.next_u64());
    }

    #[test]
    fn worker_slices_tile_the_global_sequence() {
        let mut rng = SplitMix64::new(DEFAULT_SEED);
        let global: Vec<f64> = (0..100).map(|_| rng.next_f64()).collect();
        for threads in [1, 3, 4, 7] {
            let tiled: Vec<f64> = generate_values(100, threads, DEFAULT_SEED)
                .into_iter()
                .flatten()
                .collect();
            assert_eq!(tiled, global, "threads = {threads}");
        }
    }

    #[test]
    fn write_bench_produces_verified_deterministic_files() {
        let mut config = WriteBenchConfig::new(10_000, 1);
        config.codec = CodecId::STORE;
        let (m1, bytes1) = write_bench_to_memory(&config).unwrap();
        let (_, bytes2) = write_bench_to_memory(&config).unwrap();
        assert_eq!(bytes1, bytes2, "single-threaded runs are byte-identical");
        assert_eq!(m1.entries, 10_000);
        assert_eq!(m1.bytes_uncompressed, 80_000);
        assert_eq!(m1.bytes_written, bytes1.len() as u64);
        assert_eq!(file_codec_name(&bytes1).unwrap(), "store");
    }

    #[test]
    fn thread_count_changes_layout_but_not_values() {
        let sorted_values = |bytes: &[u8]| -> Vec<u64> {
            let reader = FileReader::open(bytes.to_vec(), ReadOptions::sequential()).unwrap();
            match reader.read_column("value").unwrap() {
                ColumnValues::F64(v) => {
                    let mut bits: Vec<u64> = v.iter().map(|x| x.to_bits()).collect();
                    bits.sort_unstable();
                    bits
                }
                other => panic!("unexpected column shape {other:?}"),
            }
        };
        let mut config = WriteBenchConfig::new(5_000, 1);
        config.codec = CodecId::STORE;
        let (_, single) = write_bench_to_memory(&config).unwrap();
        config.threads = 4;
        let (_, multi) = write_bench_to_memory(&config).unwrap();
        assert_eq!(sorted_values(&single), sorted_values(&multi));
    }

    #[test]
    fn read_modes_agree_on_checksum_and_bytes() {
        let mut config = WriteBenchConfig::new(20_000, 2);
        config.basket_target_bytes = 1024;
        let (_, bytes) = write_bench_to_memory(&config).unwrap();
        let measure = |mode| {
            run_read_bench(
                &bytes,
                &ReadBenchConfig {
                    mode,
                    threads: 2,
                    columns: None,
                },
            )
            .unwrap()
        };
        let sequential = measure(ReadMode::Sequential);
        let columns = measure(ReadMode::Columns);
        let pipelined = measure(ReadMode::Pipelined);
        assert_eq!(sequential.checksum, columns.checksum);
        assert_eq!(sequential.checksum, pipelined.checksum);
        assert_eq!(sequential.bytes_uncompressed, 160_000);
        assert_eq!(columns.bytes_uncompressed, 160_000);
        assert_eq!(pipelined.bytes_uncompressed, 160_000);
        assert_eq!(sequential.entries, 20_000);
        assert_eq!(file_codec_name(&bytes).unwrap(), "deflate");
    }

    #[test]
    fn write_to_path_round_trips(){
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bench.bkt");
        let mut config = WriteBenchConfig::new(1_000, 2);
        config.codec = CodecId::STORE;
        let measurement = run_write_bench(&config, &BenchSink::Path(path.clone())).unwrap();
        assert_eq!(measurement.entries, 1_000);
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(measurement.bytes_written, bytes.len() as u64);
    }

    #[test]
    fn zero_entries_rejected() {
        let config = WriteBenchConfig::new(0, 1);
        assert!(matches!(
            write_bench_to_memory(&config),
            Err(Error::InvalidArgument(_))
        ));
    }
}
