//! Command failures and their exit codes.

use std::io;
use std::path::{Path, PathBuf};

use adscope_core::catgraph::GraphError;
use adscope_core::cluster::ClusterError;
use adscope_core::objstats::ObjStatsError;
use adscope_core::predict::PredictError;
use adscope_core::synth::SynthError;
use serde::Serialize;
use thiserror::Error;

use crate::manifest::ManifestError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_MISSING_MANIFEST: i32 = 2;
pub const EXIT_INVALID: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("no manifest given (pass a path or set paths.manifest)")]
    NoManifest,
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Objects(#[from] ObjStatsError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::NoManifest | CliError::Manifest(ManifestError::NotFound(_)) => {
                EXIT_MISSING_MANIFEST
            }
            CliError::Manifest(ManifestError::Io { .. }) | CliError::Io { .. } => EXIT_IO,
            CliError::Cluster(ClusterError::WcssIncreased { .. })
            | CliError::Predict(PredictError::LossIncreased { .. }) => EXIT_INVARIANT,
            _ => EXIT_INVALID,
        }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            EXIT_MISSING_MANIFEST => "missing_manifest",
            EXIT_IO => "io",
            EXIT_INVARIANT => "invariant_breach",
            _ => "validation",
        }
    }

    pub fn document(&self, command: &str) -> ErrorDocument {
        ErrorDocument {
            command: command.to_string(),
            kind: self.kind(),
            exit_code: self.exit_code(),
            message: self.to_string(),
        }
    }
}

/// Contents of `error.json`.
#[derive(Debug, Serialize)]
pub struct ErrorDocument {
    pub command: String,
    pub kind: &'static str,
    pub exit_code: i32,
    pub message: String,
}
