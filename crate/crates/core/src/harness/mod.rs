//! Experiment orchestration: configs, seeded runs and report files.

pub mod config;
pub mod report;
pub mod run;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{ConfigError, Derived, EnvironmentKind, EpochLength, ExperimentConfig};
pub use report::{emit_all, emit_csv, emit_plot, read_trace, report, write_trace, ReportOutcome};
pub use run::{substream, Experiment, ExperimentResult, RegretTrace, RoundEvent};

use crate::environment::FactorError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Factor(#[from] FactorError),
    #[error(transparent)]
    Model(#[from] crate::Error),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("nothing to write")]
    Empty,
}
