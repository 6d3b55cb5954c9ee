//! Command-line front end: experiment configs, tuning, cohort evaluation,
//! controller comparison and replay of emitted CSV reports.

pub mod commands;
pub mod config;
pub mod csv;
pub mod error;
pub mod manifest;

pub use commands::run;
pub use error::{CliError, CliResult};
pub use manifest::{Command, RunManifest};
