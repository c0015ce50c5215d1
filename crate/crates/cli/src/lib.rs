//! Benchmark runner for deep embedding clustering on tabular data.
//!
//! Loads datasets from CSV manifests or generates synthetic blobs, runs the
//! five-fold protocol of `tabcluster-core` for every (dataset, method) pair
//! on a worker pool, keeps a resumable JSON-lines ledger, and writes
//! accuracy and rank tables.

pub mod config;
pub mod error;
pub mod ledger;
pub mod manifest;
pub mod report;
pub mod runner;

pub use config::{BenchmarkConfig, DatasetSource, SyntheticSpec};
pub use error::{BenchError, DataError};
pub use manifest::{load_csv, DatasetManifest, BENCHMARK_DATASETS};
pub use runner::{report, run_benchmark, RunOptions, RunSummary};
