//! Benchmark harness behind the `qnbench` binary: configured runs with CSV
//! and JSON artifacts, the fixed-step convergence-bound probe, and timing
//! tables.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 a run
//! that did not converge (its artifacts are still written), 1 anything else.

mod config;
mod probe;
mod run;
mod timing;

pub use config::{Method, RunConfig, Task, DATA_DIR_ENV};
pub use probe::{probe_bound, ProbeConfig, ProbeReport};
pub use run::{records_csv, run, write_artifacts, RunReport, Summary};
pub use timing::{timing_compare, timing_csv, TimingConfig, TimingRow};

use std::path::Path;

use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;

/// Process exit code for a failed run.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::StepTooLarge { .. } | Error::DimensionMismatch { .. } => EXIT_CONFIG,
        Error::Data(_) => EXIT_DATA,
        _ => 1,
    }
}

/// Probe artifacts: `probe.csv` (`iter,offset,bound`) and `probe.json`.
pub fn write_probe(dir: &Path, report: &ProbeReport) -> crate::Result<()> {
    let mut csv = String::from("iter,offset,bound\n");
    for (k, (o, b)) in report.offsets.iter().zip(&report.bound).enumerate() {
        csv.push_str(&format!("{k},{o:e},{b:e}\n"));
    }
    let json = serde_json::to_string_pretty(report).expect("probe reports always serialize");
    run::create_dir(dir)?;
    run::write_file(dir, "probe.csv", &csv)?;
    run::write_file(dir, "probe.json", &(json + "\n"))
}

/// Writes `timing.csv`.
pub fn write_timing(dir: &Path, rows: &[TimingRow]) -> crate::Result<()> {
    let csv = timing_csv(rows)?;
    run::create_dir(dir)?;
    run::write_file(dir, "timing.csv", &csv)
}
