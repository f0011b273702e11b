//! File formats, run configuration and the `tqs` command-line tool built on
//! [`tqs_core`].

pub mod analysis;
pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod measurements;
pub mod output;

pub use error::{CliError, CliResult, ExitKind};
pub use tqs_core as core;
