//! Experiment orchestration behind the `gpmro` command: configuration,
//! result bundles, driving batches and figures.

pub mod config;
pub mod drive;
pub mod output;
pub mod plot;
pub mod synthetic;
pub mod tau;

pub use config::{Benchmark, ExperimentConfig, Profile};
