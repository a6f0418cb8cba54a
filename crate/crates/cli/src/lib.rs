//! Configuration, experiment orchestration and artifact writing for the `hymlab` binary.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;

pub use commands::{cmd_experiment, cmd_mavol, cmd_resume, cmd_solve, cmd_verify, Context, ExperimentKind};
pub use config::RunConfig;
pub use error::{CliError, CliResult};
