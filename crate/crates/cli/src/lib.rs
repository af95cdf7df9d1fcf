//! Scenario files, reports and experiment sweeps on top of the `bivirus`
//! kernels. The `bivirus` binary is a thin wrapper around [`commands`] and
//! [`sweep`].

pub mod commands;
pub mod config;
pub mod error;
pub mod format;
pub mod instances;
pub mod report;
pub mod sweep;

pub use commands::{analyze, control, markov_compare, run_scenario, sensitivity, RunOptions};
pub use config::{InitialPattern, Scenario, ScenarioConfig};
pub use error::{CliError, CliResult};
pub use report::RunReport;
pub use sweep::{run_approx_experiment, CellResult, SweepConfig};
