//! `bkt`: merge, verify and benchmark basket files.
//!
//! Reports go to standard output; everything else (progress, errors,
//! per-basket failure details) goes to standard error. Exit codes:
//! 0 success, 1 data or I/O error, 2 usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use bkt::bench::{
    file_codec_name, run_read_bench, run_write_bench, BenchSink, ReadBenchConfig, ReadMode,
    WriteBenchConfig, DEFAULT_SEED,
};
use bkt::report::{Operation, ThroughputReport};
use bkt::{
    CodecId, CompressionLevel, Error, FileReader, MergeJob, ReadOptions, WriterOptions,
};

#[derive(Parser)]
#[command(name = "bkt", version, about = "Columnar basket file toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Merge basket files into one, preserving input order
    Merge(MergeArgs),
    /// Throughput benchmarks with machine-readable reports
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Check every basket checksum in a file
    Verify {
        file: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum CodecArg {
    Store,
    Deflate,
}

impl CodecArg {
    fn id(self) -> CodecId {
        match self {
            CodecArg::Store => CodecId::STORE,
            CodecArg::Deflate => CodecId::DEFLATE,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Args)]
struct MergeArgs {
    /// Output file
    #[arg(short, long)]
    output: PathBuf,
    /// Worker threads for validating and loading inputs
    #[arg(short, long, default_value_t = bkt::default_thread_count(),
          value_parser = clap::value_parser!(usize))]
    jobs: usize,
    /// Codec for any baskets the writer itself seals (merged baskets are
    /// copied verbatim, never re-compressed)
    #[arg(long, value_enum, default_value_t = CodecArg::Deflate)]
    codec: CodecArg,
    /// Compression level, 0-9
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u8).range(0..=9))]
    level: u8,
    /// Input files, concatenated in the order given
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Generate values and write them through the buffer merger
    Write(BenchWriteArgs),
    /// Time one read strategy over a file
    Read(BenchReadArgs),
}

#[derive(Args)]
struct BenchWriteArgs {
    /// f64 entries to generate (8 bytes each)
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    entries: u64,
    /// Writer threads
    #[arg(long, value_parser = clap::value_parser!(usize))]
    threads: usize,
    #[arg(long, value_enum, default_value_t = CodecArg::Deflate)]
    codec: CodecArg,
    /// Compression level, 0-9
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u8).range(0..=9))]
    level: u8,
    /// "memory" or an output path
    #[arg(long, default_value = "memory")]
    sink: String,
    /// PRNG seed
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    /// Also run a 1-thread baseline and report the speedup
    #[arg(long)]
    baseline: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Sequential,
    Columns,
    Pipelined,
}

impl ModeArg {
    fn mode(self) -> ReadMode {
        match self {
            ModeArg::Sequential => ReadMode::Sequential,
            ModeArg::Columns => ReadMode::Columns,
            ModeArg::Pipelined => ReadMode::Pipelined,
        }
    }
}

#[derive(Args)]
struct BenchReadArgs {
    file: PathBuf,
    /// Read strategy
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// Reader threads
    #[arg(long, value_parser = clap::value_parser!(usize))]
    threads: usize,
    /// Comma-separated column names (default: every column)
    #[arg(long, value_delimiter = ',')]
    columns: Option<Vec<String>>,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    /// Also run a sequential 1-thread baseline and report the speedup
    #[arg(long)]
    baseline: bool,
}

fn emit(report: &ThroughputReport, format: FormatArg) {
    match format {
        FormatArg::Json => println!("{}", report.to_json()),
        FormatArg::Csv => println!("{}", report.to_csv()),
    }
}

fn cmd_merge(args: &MergeArgs) -> Result<(), Error> {
    let job = MergeJob {
        inputs: args.inputs.clone(),
        output: args.output.clone(),
        jobs: args.jobs,
        options: WriterOptions {
            codec: args.codec.id(),
            level: CompressionLevel::new(args.level)?,
            ..WriterOptions::with_threads(args.jobs)
        },
    };
    let summary = bkt::run_merge(&job)?;
    println!(
        "{}: {} inputs, {} entries, {} baskets, {} bytes",
        args.output.display(),
        args.inputs.len(),
        summary.total_entries,
        summary.baskets,
        summary.bytes_written
    );
    Ok(())
}

fn in_file(path: &Path, err: std::io::Error) -> Error {
    Error::InFile {
        path: path.display().to_string(),
        source: Box::new(Error::Source(err)),
    }
}

fn cmd_verify(file: &PathBuf) -> Result<(), Error> {
    let source = std::fs::File::open(file).map_err(|e| in_file(file, e))?;
    let reader = FileReader::open(source, ReadOptions::default())?;
    let report = reader.verify();
    for failure in &report.failures {
        eprintln!(
            "{}: column {} entry {}: {}",
            file.display(),
            failure.column_id,
            failure.first_entry,
            failure.reason
        );
    }
    println!(
        "{}: {} baskets, {} failures",
        file.display(),
        report.baskets_total,
        report.failures.len()
    );
    if report.is_ok() {
        Ok(())
    } else {
        Err(Error::CorruptStream(format!(
            "{} of {} baskets failed verification",
            report.failures.len(),
            report.baskets_total
        )))
    }
}

fn cmd_bench_write(args: &BenchWriteArgs) -> Result<(), Error> {
    if args.threads == 0 {
        return Err(Error::InvalidArgument("threads must be positive".into()));
    }
    let sink = if args.sink == "memory" {
        BenchSink::Memory
    } else {
        BenchSink::Path(PathBuf::from(&args.sink))
    };
    let mut config = WriteBenchConfig::new(args.entries, args.threads);
    config.codec = args.codec.id();
    config.level = CompressionLevel::new(args.level)?;
    config.seed = args.seed;

    let speedup = if args.baseline {
        let mut base_config = config.clone();
        base_config.threads = 1;
        let base = run_write_bench(&base_config, &sink)?;
        eprintln!("baseline: 1 thread, {:.6}s", base.wall_seconds);
        Some(base.wall_seconds)
    } else {
        None
    };

    let measurement = run_write_bench(&config, &sink)?;
    eprintln!(
        "wrote {} entries, {} file bytes",
        measurement.entries, measurement.bytes_written
    );
    let report = ThroughputReport::new(
        Operation::Write,
        measurement.bytes_uncompressed,
        measurement.wall_seconds,
        args.threads as u32,
        config.codec.name(),
        speedup.map(|base| base / measurement.wall_seconds),
        measurement.cpu_seconds,
    );
    emit(&report, args.format);
    Ok(())
}

fn cmd_bench_read(args: &BenchReadArgs) -> Result<(), Error> {
    if args.threads == 0 {
        return Err(Error::InvalidArgument("threads must be positive".into()));
    }
    let bytes = std::fs::read(&args.file).map_err(|e| in_file(&args.file, e))?;
    let config = ReadBenchConfig {
        mode: args.mode.mode(),
        threads: args.threads,
        columns: args.columns.clone(),
    };

    let baseline = if args.baseline {
        let base = run_read_bench(
            &bytes,
            &ReadBenchConfig {
                mode: ReadMode::Sequential,
                threads: 1,
                columns: args.columns.clone(),
            },
        )?;
        eprintln!("baseline: sequential, {:.6}s", base.wall_seconds);
        Some(base)
    } else {
        None
    };

    let measurement = run_read_bench(&bytes, &config)?;
    if let Some(base) = &baseline {
        if base.checksum != measurement.checksum {
            return Err(Error::CorruptStream(format!(
                "checksum diverged between modes: {:#018x} vs {:#018x}",
                base.checksum, measurement.checksum
            )));
        }
    }
    eprintln!(
        "read {} entries, checksum={:#018x}",
        measurement.entries, measurement.checksum
    );
    let report = ThroughputReport::new(
        Operation::Read,
        measurement.bytes_uncompressed,
        measurement.wall_seconds,
        args.threads as u32,
        file_codec_name(&bytes)?,
        baseline.map(|base| base.wall_seconds / measurement.wall_seconds),
        measurement.cpu_seconds,
    );
    emit(&report, args.format);
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Merge(args) => cmd_merge(args),
        Command::Bench(BenchCommand::Write(args)) => cmd_bench_write(args),
        Command::Bench(BenchCommand::Read(args)) => cmd_bench_read(args),
        Command::Verify { file } => cmd_verify(file),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Every error variant interpolates its source into its own
            // message, so the full story is one line.
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
