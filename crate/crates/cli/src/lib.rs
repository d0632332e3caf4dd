//! Library half of the command-line front end: config parsing, file
//! formats, and subcommand bodies. The `trajinf` binary is a thin
//! dispatcher over these.

pub mod commands;
pub mod config;
pub mod errors;
pub mod io;

pub use config::{load_config, parse_config, RunConfig};
pub use errors::{CliError, CliResult};
