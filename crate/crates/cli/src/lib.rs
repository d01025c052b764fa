//! Benchmark harness: config loading, parallel job execution and report
//! tables for the kanfc forecasters.

pub mod bench;
pub mod config;
pub mod report;

pub use bench::{run_benchmark, RunSummary};
pub use config::{BenchmarkConfig, CliOverrides};
