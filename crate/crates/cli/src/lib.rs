//! Command-line driver: JSON run configuration in, CSV/JSON reports out.

pub mod commands;
pub mod config;
pub mod error;

pub use config::RunConfig;
pub use error::{CliError, CliResult, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, EXIT_THRESHOLD};
