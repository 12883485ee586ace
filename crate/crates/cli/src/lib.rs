//! Experiment harness for `liteupdate-core`: JSON configuration, checkpoints,
//! CSV/markdown reports and parallel experiment runners.

pub mod checkpoint;
pub mod config;
pub mod experiments;
pub mod export;
pub mod report;

pub use config::{ExperimentConfig, ExperimentKind, GeneratorConfig};
pub use experiments::{run, write_outputs, RunOutput};
pub use report::{MetricsReport, Row};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("report: {0}")]
    Report(String),
    #[error("{0}: {1}")]
    Io(String, String),
    #[error(transparent)]
    Core(#[from] liteupdate_core::Error),
}
