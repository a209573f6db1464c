//! Batch front end for `pfdisc`: configuration, dataset I/O, synthetic
//! benchmarks, pipeline orchestration and result persistence.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmark;
pub mod config;
pub mod csvio;
pub mod error;
pub mod output;
pub mod pipeline;

pub use benchmark::{generate_benchmark, Benchmark, BenchmarkName};
pub use config::ExperimentConfig;
pub use csvio::{load_csv, save_csv};
pub use error::{CliError, Result};
pub use output::{compare_dirs, save_results, verify_manifest};
pub use pipeline::{run_baseline, run_experiment, ResultBundle};
