//! Experiment orchestration: JSON configs, named presets, parallel sweeps,
//! and CSV output with a provenance sidecar.

mod config;
mod presets;
mod runner;
mod table;
mod trace;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{DistanceModel, ExperimentConfig, Scenario, Sweep, SweepAxis};
pub use presets::{preset, preset_names, PRESETS};
pub use runner::{run_experiment, run_to_dir, RunArtifacts};
pub use table::{emit_csv, format_sig9, read_csv, write_sidecar, Cell, Provenance, ResultTable};
pub use trace::{ingest_voltage_trace, IngestedTrace};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error in `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("simulation error: {0}")]
    Simulation(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {reason}", path.display())]
    Parse { path: PathBuf, line: u64, reason: String },
}

impl ExperimentError {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ExperimentError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ExperimentError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config { .. } | ExperimentError::Parse { .. } => 2,
            ExperimentError::Simulation(_) => 3,
            ExperimentError::Io { .. } => 4,
        }
    }
}

impl From<crate::link::LinkError> for ExperimentError {
    fn from(e: crate::link::LinkError) -> Self {
        ExperimentError::Simulation(e.to_string())
    }
}

impl From<crate::rf::RfError> for ExperimentError {
    fn from(e: crate::rf::RfError) -> Self {
        ExperimentError::Simulation(e.to_string())
    }
}

impl From<crate::mac::MacError> for ExperimentError {
    fn from(e: crate::mac::MacError) -> Self {
        ExperimentError::Simulation(e.to_string())
    }
}
