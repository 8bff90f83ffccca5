//! Scenario-driven front end for `sdc-core`.
//!
//! Each subcommand reads one JSON scenario, prints a JSON result on stdout and
//! returns an exit code from [`CliError::exit_code`].

pub mod commands;
pub mod error;
pub mod scenario;

pub use error::{CliError, Result};
pub use scenario::ScenarioFile;
