//! Experiment harness for Patlak parametric imaging. Configs, the method
//! comparison matrix and its reports.

pub mod config;
pub mod error;
pub mod experiment;
pub mod pipeline;
pub mod slices;

pub use config::{ExperimentConfig, MethodConfig, MethodKind, ScoreConfig};
pub use error::{CliError, CliResult};
pub use experiment::{run_experiment, Report};
pub use slices::emit_slices;
