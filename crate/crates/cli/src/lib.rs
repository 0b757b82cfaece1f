//! Benchmark harness around the core library: experiment configuration,
//! resumable stage orchestration, model artifacts, and report rendering.
//!
//! The `tsforge` binary is a thin argument parser over [`pipeline::execute`];
//! everything it can do is callable from here, which is also how the
//! integration tests drive full runs in-process.
//!
//! Reproducibility contract: given one configuration and master seed, every
//! output file's bytes are fixed — worker count and output location change
//! nothing but wall-clock time and where the bytes land. Every output is
//! checksummed into `manifest.json` as it is written, completed stages are
//! never recomputed under an unchanged configuration hash, and a changed
//! hash clears the directory and starts over.

pub mod analyze;
pub mod artifact;
pub mod config;
pub mod evaluate;
pub mod manifest;
pub mod pipeline;
pub mod report;
pub mod train;

pub use artifact::{load_model, persist_model, ModelArtifact, Provenance};
pub use config::{load_experiment_config, ExperimentConfig, ModelEntry};
pub use manifest::{RunManifest, TaskFailure, MANIFEST_FILE};
pub use pipeline::{execute, Goal};
