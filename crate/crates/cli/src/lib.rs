//! File formats, reports and the `adscope` command line on top of
//! [`adscope_core`].
//!
//! * [`manifest`]: the JSON-lines corpus manifest and its f32 vector sidecar.
//! * [`config`]: the TOML run configuration and override merging.
//! * [`commands`]: one function per pipeline stage, each writing its report.
//! * [`graph_export`]: TSV edge list and GraphML output.

#![forbid(unsafe_code)]

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod exec;
pub mod graph_export;
pub mod manifest;
pub mod report;

pub use cli::main_with_args;
pub use error::CliError;
pub use exec::RayonExecutor;
