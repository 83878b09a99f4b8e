//! Command-line front end: config parsing, dataset I/O, and one function
//! per subcommand.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use commands::{run, Cli, Command};
pub use error::{exit, CliError, CliResult};
