//! Batch driver for migr-scatter experiments: configuration, precondition
//! checks, the staged pipeline and its checksummed manifest.

pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;

pub use config::{ExperimentConfig, Violation};
pub use error::{HarnessError, Result};
pub use manifest::RunManifest;
pub use pipeline::{run_pipeline, RunOptions, Stage};

/// Environment variable that overrides the worker thread count.
pub const THREADS_ENV: &str = "MIGR_THREADS";
