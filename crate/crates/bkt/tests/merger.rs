//! Concurrent buffer-merger behavior: conservation of rows across many
//! workers, ordering within each worker's data, and queue backpressure.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};

use bkt::{
    BufferMerger, CodecId, Column, ColumnValues, FileReader, ReadOptions, Schema, TypeCode,
    Value, WriterOptions,
};

fn two_column_schema() -> Schema {
    Schema::new(vec![
        Column::new("worker", TypeCode::I64),
        Column::new("seq", TypeCode::I64),
    ])
    .unwrap()
}

fn read_pairs(bytes: Vec<u8>) -> Vec<(i64, i64)> {
    let reader = FileReader::open(bytes, ReadOptions::sequential()).unwrap();
    let workers = match reader.read_column("worker").unwrap() {
        ColumnValues::I64(v) => v,
        other => panic!("unexpected shape {other:?}"),
    };
    let seqs = match reader.read_column("seq").unwrap() {
        ColumnValues::I64(v) => v,
        other => panic!("unexpected shape {other:?}"),
    };
    assert_eq!(workers.len(), seqs.len(), "columns stay row-aligned");
    workers.into_iter().zip(seqs).collect()
}

#[test]
fn concurrent_workers_conserve_rows_and_order() {
    // Uneven loads, including a worker that writes nothing.
    let loads: [u64; 6] = [1000, 0, 1, 2500, 999, 3000];
    let options = WriterOptions {
        codec: CodecId::DEFLATE,
        basket_target_bytes: 1024,
        ..WriterOptions::with_threads(1)
    };
    let mut merger = BufferMerger::create(Vec::new(), two_column_schema(), options, 3).unwrap();
    std::thread::scope(|scope| {
        for (worker, &rows) in loads.iter().enumerate() {
            let merger = &merger;
            scope.spawn(move || {
                // Several memory files per worker, so dequeue interleaving
                // actually happens.
                for chunk in (0..rows).collect::<Vec<_>>().chunks(700) {
                    let mut handle = merger.get_file().unwrap();
                    for &seq in chunk {
                        handle
                            .append_row(&[Value::I64(worker as i64), Value::I64(seq as i64)])
                            .unwrap();
                    }
                    handle.close().unwrap();
                }
            });
        }
    });
    let (summary, bytes) = merger.close().unwrap();
    assert_eq!(summary.total_entries, loads.iter().sum::<u64>());

    let pairs = read_pairs(bytes);
    assert_eq!(pairs.len() as u64, loads.iter().sum::<u64>());
    for (worker, &rows) in loads.iter().enumerate() {
        let seqs: Vec<i64> = pairs
            .iter()
            .filter(|(w, _)| *w == worker as i64)
            .map(|(_, s)| *s)
            .collect();
        let expected: Vec<i64> = (0..rows as i64).collect();
        assert_eq!(seqs, expected, "worker {worker} rows survive in order");
    }
}

#[test]
fn four_workers_quarter_million_rows_each() {
    let schema = Schema::new(vec![Column::new("v", TypeCode::I64)]).unwrap();
    let options = WriterOptions {
        codec: CodecId::STORE,
        ..WriterOptions::with_threads(1)
    };
    let mut merger = BufferMerger::create(Vec::new(), schema, options, 8).unwrap();
    std::thread::scope(|scope| {
        for worker in 0..4i64 {
            let merger = &merger;
            scope.spawn(move || {
                let mut handle = merger.get_file().unwrap();
                for i in 0..250_000i64 {
                    handle.append_row(&[Value::I64(worker * 250_000 + i)]).unwrap();
                }
                handle.close().unwrap();
            });
        }
    });
    let (summary, bytes) = merger.close().unwrap();
    assert_eq!(summary.total_entries, 1_000_000);
    let reader = FileReader::open(bytes, ReadOptions::sequential()).unwrap();
    assert_eq!(reader.total_entries(), 1_000_000);
    let mut values = match reader.read_column("v").unwrap() {
        ColumnValues::I64(v) => v,
        other => panic!("unexpected shape {other:?}"),
    };
    values.sort_unstable();
    assert!(values.iter().copied().eq(0..1_000_000i64), "no row lost or duplicated");
}

/// Sink whose writes block while the gate is closed, stalling the merge
/// thread on its first basket.
#[derive(Clone)]
struct GatedSink {
    open: Arc<(Mutex<bool>, Condvar)>,
    written: Arc<Mutex<Vec<u8>>>,
}

impl GatedSink {
    fn new() -> GatedSink {
        GatedSink {
            open: Arc::new((Mutex::new(true), Condvar::new())),
            written: Arc::new(Mutex::new(Vec::new())),
        }
    }

    fn set_gate(&self, open: bool) {
        *self.open.0.lock().unwrap() = open;
        self.open.1.notify_all();
    }
}

impl std::io::Write for GatedSink {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let (lock, condvar) = &*self.open;
        let mut open = lock.lock().unwrap();
        while !*open {
            open = condvar.wait(open).unwrap();
        }
        drop(open);
        self.written.lock().unwrap().extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

#[test]
fn backpressure_blocks_producers_and_bounds_queued_bytes() {
    const ROWS_PER_FILE: usize = 100;
    const MEMFILES: usize = 5;
    const CAPACITY: usize = 2;
    // One i64 column, store codec, one basket per memory file:
    // 29 header bytes + 800 payload bytes.
    const MEMFILE_BYTES: usize = 29 + 8 * ROWS_PER_FILE;

    let schema = Schema::new(vec![Column::new("v", TypeCode::I64)]).unwrap();
    let options = WriterOptions {
        codec: CodecId::STORE,
        ..WriterOptions::with_threads(1)
    };
    let sink = GatedSink::new();
    // Header goes through, then the gate shuts before any basket.
    let mut merger = BufferMerger::create(sink.clone(), schema, options, CAPACITY).unwrap();
    sink.set_gate(false);

    let closes_completed = Arc::new(AtomicUsize::new(0));
    let producer_done = Arc::new(AtomicUsize::new(0));
    let high_water_files = Arc::new(AtomicUsize::new(0));
    let high_water_bytes = Arc::new(AtomicUsize::new(0));

    std::thread::scope(|scope| {
        let producer = {
            let merger = &merger;
            let closes = Arc::clone(&closes_completed);
            let done = Arc::clone(&producer_done);
            scope.spawn(move || {
                for _ in 0..MEMFILES {
                    let mut handle = merger.get_file().unwrap();
                    for i in 0..ROWS_PER_FILE {
                        handle.append_row(&[Value::I64(i as i64)]).unwrap();
                    }
                    handle.close().unwrap();
                    closes.fetch_add(1, Ordering::SeqCst);
                }
                done.store(1, Ordering::SeqCst);
            })
        };

        // Sample the queue until it saturates: the merge thread holds one
        // memory file at its stalled write, the queue holds CAPACITY more,
        // and the next close blocks.
        let expected_closes = 1 + CAPACITY;
        let deadline = std::time::Instant::now() + std::time::Duration::from_secs(30);
        loop {
            let files = merger.queued_files();
            let bytes = merger.queued_bytes();
            high_water_files.fetch_max(files, Ordering::SeqCst);
            high_water_bytes.fetch_max(bytes, Ordering::SeqCst);
            if closes_completed.load(Ordering::SeqCst) == expected_closes && files == CAPACITY {
                break;
            }
            assert!(
                std::time::Instant::now() < deadline,
                "queue never saturated: {files} files, {} closes",
                closes_completed.load(Ordering::SeqCst)
            );
            std::thread::yield_now();
        }
        // Give the producer every chance to (wrongly) run ahead.
        std::thread::sleep(std::time::Duration::from_millis(200));
        high_water_files.fetch_max(merger.queued_files(), Ordering::SeqCst);
        high_water_bytes.fetch_max(merger.queued_bytes(), Ordering::SeqCst);

        assert_eq!(
            closes_completed.load(Ordering::SeqCst),
            expected_closes,
            "producer is blocked in push, not failing"
        );
        assert_eq!(producer_done.load(Ordering::SeqCst), 0, "producer still running");
        sink.set_gate(true);
        producer.join().unwrap();
    });

    let (summary, _) = merger.close().unwrap();
    assert_eq!(summary.total_entries, (ROWS_PER_FILE * MEMFILES) as u64);
    assert!(high_water_files.load(Ordering::SeqCst) <= CAPACITY);
    assert!(
        high_water_bytes.load(Ordering::SeqCst) <= CAPACITY * MEMFILE_BYTES,
        "queued bytes {} exceed {}",
        high_water_bytes.load(Ordering::SeqCst),
        CAPACITY * MEMFILE_BYTES
    );
    let written = sink.written.lock().unwrap();
    let reader = FileReader::open(written.clone(), ReadOptions::sequential()).unwrap();
    assert!(reader.verify().is_ok());
}
