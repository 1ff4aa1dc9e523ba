//! Experiment runner: JSON configs, synthetic ground truths, metric streams,
//! checkpoints and the learner matrix.

pub mod build;
pub mod config;
pub mod datasets;
pub mod matrix;
pub mod metrics;
pub mod requests;
pub mod run;

pub use config::ExperimentConfig;
pub use run::{evaluate, train, Against, EvalReport, RunSummary};

/// Environment variable that sets the output root when `--out-dir` is absent.
pub const OUT_DIR_ENV: &str = "SAGL_OUT_DIR";
