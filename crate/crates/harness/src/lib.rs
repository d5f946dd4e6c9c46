//! Experiment configuration, training runs, sweeps and comparisons.

pub mod config;
pub mod experiment;
pub mod stats;

use thiserror::Error;

pub use config::{AxisValue, ExperimentConfig, Preset, SweepAxis};
pub use experiment::{compare, run, run_all, sweep, ComparisonReport, MetricRecord, RunSummary, SweepTable};

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Invalid configuration or arguments; the CLI exits with status 2.
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Train(#[from] secnoma_learn::TrainError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Checkpoint(#[from] secnoma_learn::checkpoint::CheckpointError),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            _ => 1,
        }
    }
}
