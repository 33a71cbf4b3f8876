//! Run configuration: a TOML file with one table per stage.
//!
//! Values are merged in order: built-in defaults, the config file,
//! `ADSCOPE_OUTPUT_DIR`, then `--set section.key=value` flags and the named
//! command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use adscope_core::catgraph::DEFAULT_EDGE_THRESHOLD;
use adscope_core::cluster::{
    KMeansConfig, ProfileParams, SelectKParams, DEFAULT_K_RANGE, DEFAULT_MAX_ITER, DEFAULT_REPEATS,
    DEFAULT_SAMPLE_SIZE,
};
use adscope_core::objstats::DEFAULT_STOP_THRESHOLD;
use adscope_core::predict::{
    BoostingParams, EvalParams, FilterParams, ForestParams, DEFAULT_BOOSTING_ITERATIONS,
    DEFAULT_LEARNING_RATE, DEFAULT_MAX_CTR, DEFAULT_MIN_IMPRESSIONS, DEFAULT_NUM_TREES,
    DEFAULT_SPLIT_FRACTION,
};
use adscope_core::tree::TreeParams;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const OUTPUT_DIR_ENV: &str = "ADSCOPE_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "adscope-out";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub synth: SynthConfig,
    pub objects: ObjectsConfig,
    pub graph: GraphConfig,
    pub cluster: ClusterConfig,
    pub select_k: SelectKConfig,
    pub predict: PredictConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_records: usize,
    pub dim: usize,
    pub num_clusters: usize,
    /// Write vectors to a binary sidecar instead of inline.
    pub sidecar: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_records: 2_000,
            dim: 32,
            num_clusters: 5,
            sidecar: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectsConfig {
    pub stop_threshold: f64,
    pub top_n: usize,
}

impl Default for ObjectsConfig {
    fn default() -> Self {
        Self {
            stop_threshold: DEFAULT_STOP_THRESHOLD,
            top_n: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub edge_threshold: f64,
    pub remove_stop_objects: bool,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            edge_threshold: DEFAULT_EDGE_THRESHOLD,
            remove_stop_objects: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    /// Required by `cluster`; `run` falls back to the selected k.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub max_iter: usize,
    pub sample_size: usize,
    pub top_n: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            k: None,
            max_iter: DEFAULT_MAX_ITER,
            sample_size: DEFAULT_SAMPLE_SIZE,
            top_n: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectKConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub repeats: usize,
    pub max_iter: usize,
}

impl Default for SelectKConfig {
    fn default() -> Self {
        Self {
            k_min: DEFAULT_K_RANGE.0,
            k_max: DEFAULT_K_RANGE.1,
            repeats: DEFAULT_REPEATS,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub min_impressions: u64,
    pub max_ctr: f64,
    pub split_fraction: f64,
    pub num_trees: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for PredictConfig {
    fn default() -> Self {
        let tree = TreeParams::default();
        Self {
            min_impressions: DEFAULT_MIN_IMPRESSIONS,
            max_ctr: DEFAULT_MAX_CTR,
            split_fraction: DEFAULT_SPLIT_FRACTION,
            num_trees: DEFAULT_NUM_TREES,
            iterations: DEFAULT_BOOSTING_ITERATIONS,
            learning_rate: DEFAULT_LEARNING_RATE,
            max_depth: tree.max_depth,
            min_leaf: tree.min_leaf,
        }
    }
}

fn check(ok: bool, message: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(message.to_string()))
    }
}

fn open_unit(x: f64) -> bool {
    x > 0.0 && x < 1.0
}

impl RunConfig {
    /// Range checks that do not need the corpus.
    pub fn validate(&self) -> Result<(), CliError> {
        check(
            open_unit(self.objects.stop_threshold),
            "objects.stop_threshold must lie in (0, 1)",
        )?;
        check(self.objects.top_n >= 1, "objects.top_n must be at least 1")?;
        check(
            open_unit(self.graph.edge_threshold),
            "graph.edge_threshold must lie in (0, 1)",
        )?;
        check(self.cluster.k != Some(0), "cluster.k must be at least 1")?;
        check(
            self.cluster.max_iter >= 1,
            "cluster.max_iter must be at least 1",
        )?;
        check(self.cluster.top_n >= 1, "cluster.top_n must be at least 1")?;
        let sk = &self.select_k;
        check(
            sk.k_min >= 1 && sk.k_min <= sk.k_max,
            "select_k needs 1 <= k_min <= k_max",
        )?;
        check(sk.repeats >= 1, "select_k.repeats must be at least 1")?;
        check(sk.max_iter >= 1, "select_k.max_iter must be at least 1")?;
        let p = &self.predict;
        check(
            (0.0..=1.0).contains(&p.max_ctr),
            "predict.max_ctr must lie in [0, 1]",
        )?;
        check(
            open_unit(p.split_fraction),
            "predict.split_fraction must lie in (0, 1)",
        )?;
        check(p.num_trees >= 1, "predict.num_trees must be at least 1")?;
        check(p.iterations >= 1, "predict.iterations must be at least 1")?;
        check(
            p.learning_rate > 0.0 && p.learning_rate <= 1.0,
            "predict.learning_rate must lie in (0, 1]",
        )?;
        check(p.min_leaf >= 1, "predict.min_leaf must be at least 1")?;
        check(self.synth.dim >= 1, "synth.dim must be at least 1")?;
        Ok(())
    }

    pub fn output_dir(&self) -> PathBuf {
        self.paths
            .output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }

    /// The config as echoed into reports. The output directory is left out
    /// so that runs into different directories produce identical reports.
    pub fn echo(&self) -> RunConfig {
        let mut echo = self.clone();
        echo.paths.output_dir = None;
        echo
    }

    pub fn select_k_params(&self) -> SelectKParams {
        SelectKParams {
            k_min: self.select_k.k_min,
            k_max: self.select_k.k_max,
            repeats: self.select_k.repeats,
            kmeans: KMeansConfig {
                max_iter: self.select_k.max_iter,
                ..Default::default()
            },
        }
    }

    pub fn kmeans_config(&self) -> KMeansConfig {
        KMeansConfig {
            max_iter: self.cluster.max_iter,
            ..Default::default()
        }
    }

    pub fn profile_params(&self) -> ProfileParams {
        ProfileParams {
            sample_size: self.cluster.sample_size,
            top_n: self.cluster.top_n,
            ..Default::default()
        }
    }

    pub fn eval_params(&self) -> EvalParams {
        let p = &self.predict;
        let tree = TreeParams {
            max_depth: p.max_depth,
            min_leaf: p.min_leaf,
            ..Default::default()
        };
        EvalParams {
            filter: FilterParams {
                min_impressions: p.min_impressions,
                max_ctr: p.max_ctr,
            },
            split_fraction: p.split_fraction,
            forest: ForestParams {
                num_trees: p.num_trees,
                tree,
            },
            boosting: BoostingParams {
                iterations: p.iterations,
                learning_rate: p.learning_rate,
                tree,
            },
        }
    }
}

/// Parses `value` as a TOML value, falling back to a bare string.
fn parse_value(value: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()))
}

/// Applies one `section.key=value` override.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {assignment:?} is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("bad override key {key:?}")));
    }
    let (last, parents) = path.split_last().expect("split yields at least one part");
    let mut current = table;
    for part in parents {
        let entry = current
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        current = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("{part} is not a table")))?;
    }
    current.insert(last.to_string(), parse_value(value.trim()));
    Ok(())
}

/// Builds the effective config from an optional file, the environment
/// lookup and `--set` overrides.
pub fn load(
    file: Option<&Path>,
    env_output_dir: Option<String>,
    overrides: &[String],
) -> Result<RunConfig, CliError> {
    let mut table = match file {
        None => toml::Table::new(),
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            text.parse::<toml::Table>()
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
    };
    if let Some(dir) = env_output_dir.filter(|d| !d.is_empty()) {
        let paths = table
            .entry("paths")
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        if let Some(paths) = paths.as_table_mut() {
            paths.insert("output_dir".into(), toml::Value::String(dir));
        }
    }
    for assignment in overrides {
        apply_override(&mut table, assignment)?;
    }
    let config: RunConfig = table
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
        let params = RunConfig::default().eval_params();
        assert_eq!(params, EvalParams::default());
    }

    #[test]
    fn file_then_env_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(
            &path,
            "seed = 7\n[paths]\noutput_dir = \"from-file\"\n[objects]\nstop_threshold = 0.1\ntop_n = 3\n",
        )
        .unwrap();
        let c = load(Some(&path), None, &[]).unwrap();
        assert_eq!((c.seed, c.objects.top_n), (7, 3));
        assert_eq!(c.output_dir(), PathBuf::from("from-file"));

        let c = load(Some(&path), Some("from-env".into()), &[]).unwrap();
        assert_eq!(c.output_dir(), PathBuf::from("from-env"));

        let sets = vec![
            "paths.output_dir=from-flag".to_string(),
            "objects.top_n=4".into(),
            "cluster.k = 6".into(),
        ];
        let c = load(Some(&path), Some("from-env".into()), &sets).unwrap();
        assert_eq!(c.output_dir(), PathBuf::from("from-flag"));
        assert_eq!(c.objects.top_n, 4);
        assert_eq!(c.objects.stop_threshold, 0.1);
        assert_eq!(c.cluster.k, Some(6));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = load(None, None, &["graph.edge_treshold=0.2".into()]).unwrap_err();
        assert!(err.to_string().contains("edge_treshold"), "{err}");
        assert!(load(None, None, &["seed".into()]).is_err());
    }

    #[test]
    fn echo_drops_output_dir() {
        let mut c = RunConfig::default();
        c.paths.output_dir = Some("a".into());
        c.paths.manifest = Some("m.jsonl".into());
        let echo = c.echo();
        assert_eq!(echo.paths.output_dir, None);
        assert_eq!(echo.paths.manifest, Some("m.jsonl".into()));
    }

    #[test]
    fn out_of_range_values_fail_validation() {
        for set in [
            "objects.stop_threshold=1.0",
            "graph.edge_threshold=0",
            "select_k.k_min=9",
            "predict.split_fraction=1",
            "cluster.k=0",
        ] {
            let mut sets = vec![set.to_string()];
            if set.starts_with("select_k") {
                sets.push("select_k.k_max=3".into());
            }
            let c = load(None, None, &sets).unwrap();
            assert!(c.validate().is_err(), "{set}");
        }
    }
}
