//! Configuration, run orchestration and reporting for the `latprot` command.

pub mod campaign;
pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod task;

pub use error::{CliError, CliResult, ErrorKind};
