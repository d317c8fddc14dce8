//! Machine-readable benchmark reports.
//!
//! One flat record per run, emitted as JSON (for assertions) or CSV (for
//! plotting). Timing fields are rounded on construction so that a report
//! parsed back compares equal to the one emitted, and `throughput_mb_s`
//! is derived from the rounded wall time so the row stays self-consistent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operation {
    Read,
    Write,
    Merge,
}

impl Operation {
    pub fn name(self) -> &'static str {
        match self {
            Operation::Read => "read",
            Operation::Write => "write",
            Operation::Merge => "merge",
        }
    }

    fn from_name(name: &str) -> Result<Operation> {
        match name {
            "read" => Ok(Operation::Read),
            "write" => Ok(Operation::Write),
            "merge" => Ok(Operation::Merge),
            other => Err(Error::InvalidArgument(format!(
                "unknown operation {other:?}"
            ))),
        }
    }
}

/// One benchmark result row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    pub operation: Operation,
    pub bytes_uncompressed: u64,
    /// Wall time of the measured phase, rounded to microseconds.
    pub wall_seconds: f64,
    pub threads: u32,
    pub codec: String,
    /// bytes_uncompressed / wall_seconds / 10^6, to 3 decimals.
    pub throughput_mb_s: f64,
    /// Present when a one-thread baseline ran: baseline wall / this wall.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speedup_vs_1thread: Option<f64>,
    /// Process CPU time over the measured phase, where the platform
    /// reports it; CPU ≈ wall × threads indicates saturated cores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpu_seconds: Option<f64>,
    pub machine: String,
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    (x * scale).round() / scale
}

impl ThroughputReport {
    pub fn new(
        operation: Operation,
        bytes_uncompressed: u64,
        wall_seconds: f64,
        threads: u32,
        codec: &str,
        speedup_vs_1thread: Option<f64>,
        cpu_seconds: Option<f64>,
    ) -> ThroughputReport {
        let wall_seconds = round_to(wall_seconds, 6);
        ThroughputReport {
            operation,
            bytes_uncompressed,
            wall_seconds,
            threads,
            codec: codec.to_string(),
            throughput_mb_s: round_to(bytes_uncompressed as f64 / wall_seconds / 1e6, 3),
            speedup_vs_1thread: speedup_vs_1thread.map(|s| round_to(s, 3)),
            cpu_seconds: cpu_seconds.map(|s| round_to(s, 6)),
            machine: crate::bench::machine_summary().replace(',', ";"),
        }
    }

    pub const CSV_HEADER: &'static str = "operation,bytes_uncompressed,wall_seconds,threads,\
                                          codec,throughput_mb_s,speedup_vs_1thread,cpu_seconds,machine";

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<ThroughputReport> {
        serde_json::from_str(text)
            .map_err(|e| Error::InvalidArgument(format!("bad report JSON: {e}")))
    }

    /// Header row plus data row.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{}\n{},{},{},{},{},{},{},{},{}",
            Self::CSV_HEADER,
            self.operation.name(),
            self.bytes_uncompressed,
            self.wall_seconds,
            self.threads,
            self.codec,
            self.throughput_mb_s,
            opt(self.speedup_vs_1thread),
            opt(self.cpu_seconds),
            self.machine
        )
    }

    pub fn from_csv(text: &str) -> Result<ThroughputReport> {
        let bad = |detail: &str| Error::InvalidArgument(format!("bad report CSV: {detail}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty input"))?;
        if header.trim() != Self::CSV_HEADER {
            return Err(bad("unexpected header row"));
        }
        let row = lines.next().ok_or_else(|| bad("missing data row"))?;
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 9 {
            return Err(bad(&format!("expected 9 fields, found {}", fields.len())));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.parse().map_err(|_| bad(&format!("bad {what} {s:?}")))
        };
        let opt_num = |s: &str, what: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                num(s, what).map(Some)
            }
        };
        Ok(ThroughputReport {
            operation: Operation::from_name(fields[0])?,
            bytes_uncompressed: fields[1]
                .parse()
                .map_err(|_| bad(&format!("bad byte count {:?}", fields[1])))?,
            wall_seconds: num(fields[2], "wall time")?,
            threads: fields[3]
                .parse()
                .map_err(|_| bad(&format!("bad thread count {:?}", fields[3])))?,
            codec: fields[4].to_string(),
            throughput_mb_s: num(fields[5], "throughput")?,
            speedup_vs_1thread: opt_num(fields[6], "speedup")?,
            cpu_seconds: opt_num(fields[7], "cpu time")?,
            machine: fields[8].to_string(),
        })
    }
}
