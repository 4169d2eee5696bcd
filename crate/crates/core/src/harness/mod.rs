//! Metrics, file formats and the benchmark runner.

pub mod bench;
pub mod io;
pub mod metrics;
pub mod report;

pub use bench::{run_bench, BenchGrid, BenchOutcome, Cell, ReplicateRow};
pub use metrics::{metric_accuracy, metric_pve, AccuracyReport, Confusion};
pub use report::{score_report, DiscoveryReport, OracleReport};
