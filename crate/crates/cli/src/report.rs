//! Report documents and the small formatting rules they share.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

/// Stable report file names.
pub mod files {
    pub const MANIFEST: &str = "corpus.jsonl";
    pub const SIDECAR: &str = "corpus_vectors.f32";
    pub const SYNTH: &str = "synth.json";
    pub const PLANTED_TRUTH: &str = "planted_truth.json";
    pub const INGEST: &str = "ingest.json";
    pub const OBJECTS: &str = "objects.json";
    pub const GRAPH: &str = "graph.json";
    pub const GRAPH_EDGES: &str = "graph_edges.tsv";
    pub const GRAPHML: &str = "graph.graphml";
    pub const SELECT_K: &str = "select_k.json";
    pub const SELECT_K_CURVE: &str = "select_k_curve.csv";
    pub const CLUSTER: &str = "cluster.json";
    pub const CLUSTER_ASSIGNMENTS: &str = "cluster_assignments.csv";
    pub const PREDICT: &str = "predict.json";
    pub const ERROR: &str = "error.json";
}

/// Envelope around every JSON report.
#[derive(Debug, Serialize)]
pub struct Report<'a, T: Serialize> {
    pub command: &'a str,
    pub seed: u64,
    pub config: RunConfig,
    pub result: T,
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::io(path, std::io::Error::other(e)))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_report<T: Serialize>(
    dir: &Path,
    file: &str,
    command: &str,
    config: &RunConfig,
    result: T,
) -> Result<(), CliError> {
    let report = Report {
        command,
        seed: config.seed,
        config: config.echo(),
        result,
    };
    write_json(&dir.join(file), &report)
}

/// Percentage of `fraction`, rounded to two decimals.
pub fn percent_2dp(fraction: f64) -> f64 {
    format!("{:.2}", fraction * 100.0)
        .parse()
        .expect("formatted float parses")
}

/// `x` rounded to six significant digits.
pub fn sig6(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_helpers() {
        assert_eq!(percent_2dp(0.123456), 12.35);
        assert_eq!(percent_2dp(0.05), 5.0);
        assert_eq!(sig6(0.00123456789), 0.00123457);
        assert_eq!(sig6(1234567.0), 1234570.0);
        assert_eq!(sig6(0.0), 0.0);
    }
}
