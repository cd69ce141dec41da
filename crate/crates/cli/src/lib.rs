//! Command-line front end for `semrel`: dataset generation, splitting, training, the
//! experiment grid and result reports.

pub mod audit;
pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod report;

pub use commands::{run_cli, Cli};
pub use error::{CliError, CliResult};
