//! File formats, configuration, parallel execution and the command-line
//! driver around `crt-cea-core`.

pub mod commands;
pub mod config;
pub mod csvio;
pub mod error;
pub mod export;
pub mod manifest;
pub mod parallel;
pub mod svg;

pub use error::{CliError, CliResult};
