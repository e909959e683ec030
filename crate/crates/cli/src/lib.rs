//! Command-line driver: configuration, subcommands and artifact output.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::{run, Command};
pub use config::Config;
pub use error::{CliError, CliResult, ErrorKind};
pub use output::{Output, MANIFEST};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "DARCY_BAYES_THREADS";
