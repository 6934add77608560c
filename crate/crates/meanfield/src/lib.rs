//! Experiment runner for `meanfield-core`: versioned TOML configs, a thread
//! pool executor, CSV outputs with manifests, and byte-level replay.

pub mod commands;
pub mod config;
pub mod control_file;
pub mod exec;
pub mod output;
pub mod run;

pub use config::{Command, ExperimentConfig};
pub use exec::PoolExecutor;
pub use run::{replay, run, RunError, RunSummary};
