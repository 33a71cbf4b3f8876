//! Argument parsing and dispatch.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands;
use crate::config::{self, RunConfig, OUTPUT_DIR_ENV};
use crate::error::{CliError, EXIT_INVALID, EXIT_OK};
use crate::exec::RayonExecutor;
use crate::report::{files, write_json};

#[derive(Debug, Parser)]
#[command(name = "adscope", version, about = "Image-ad corpus analytics")]
pub struct Cli {
    /// TOML config file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Master seed for every random stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Report directory (overrides ADSCOPE_OUTPUT_DIR and the config).
    #[arg(short, long, global = true, value_name = "DIR")]
    pub output_dir: Option<PathBuf>,
    /// Worker threads. Never changes any output.
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..=4096))]
    pub threads: Option<u32>,
    /// Config override, e.g. `--set graph.edge_threshold=0.02`.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Input {
    /// Manifest to read (default: paths.manifest).
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with planted structure.
    Synth {
        #[arg(long)]
        records: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        clusters: Option<usize>,
        /// Store vectors in a binary sidecar.
        #[arg(long)]
        sidecar: bool,
    },
    /// Validate a manifest and report corpus statistics.
    Ingest {
        #[command(flatten)]
        input: Input,
    },
    /// Object frequencies, stop-objects and per-category rankings.
    Objects {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        stop_threshold: Option<f64>,
        #[arg(long)]
        top_n: Option<usize>,
    },
    /// Category/object graph and its communities.
    Graph {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        edge_threshold: Option<f64>,
        /// Build the graph without removing stop-objects.
        #[arg(long)]
        keep_stop_objects: bool,
    },
    /// k-means++ clustering and cluster profiles.
    Cluster {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long)]
        sample_size: Option<usize>,
    },
    /// Mean-WCSS sweep over a range of k.
    SelectK {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        k_min: Option<usize>,
        #[arg(long)]
        k_max: Option<usize>,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        max_iter: Option<usize>,
    },
    /// CTR regression models on the filtered corpus.
    Predict {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        split_fraction: Option<f64>,
        #[arg(long)]
        trees: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
    },
    /// Every analysis stage in order.
    Run {
        #[command(flatten)]
        input: Input,
        /// Cluster count; when unset the k sweep picks it.
        #[arg(long)]
        k: Option<usize>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Ingest { .. } => "ingest",
            Command::Objects { .. } => "objects",
            Command::Graph { .. } => "graph",
            Command::Cluster { .. } => "cluster",
            Command::SelectK { .. } => "select-k",
            Command::Predict { .. } => "predict",
            Command::Run { .. } => "run",
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Effective config: defaults, file, environment, `--set`, then flags.
pub fn effective_config(cli: &Cli, env_output_dir: Option<String>) -> Result<RunConfig, CliError> {
    let mut c = config::load(cli.config.as_deref(), env_output_dir, &cli.overrides)?;
    set(&mut c.seed, cli.seed);
    if let Some(dir) = &cli.output_dir {
        c.paths.output_dir = Some(dir.clone());
    }
    let input = match &cli.command {
        Command::Synth {
            records,
            dim,
            clusters,
            sidecar,
        } => {
            set(&mut c.synth.num_records, *records);
            set(&mut c.synth.dim, *dim);
            set(&mut c.synth.num_clusters, *clusters);
            c.synth.sidecar |= *sidecar;
            None
        }
        Command::Ingest { input } => Some(input),
        Command::Objects {
            input,
            stop_threshold,
            top_n,
        } => {
            set(&mut c.objects.stop_threshold, *stop_threshold);
            set(&mut c.objects.top_n, *top_n);
            Some(input)
        }
        Command::Graph {
            input,
            edge_threshold,
            keep_stop_objects,
        } => {
            set(&mut c.graph.edge_threshold, *edge_threshold);
            if *keep_stop_objects {
                c.graph.remove_stop_objects = false;
            }
            Some(input)
        }
        Command::Cluster {
            input,
            k,
            max_iter,
            sample_size,
        } => {
            if k.is_some() {
                c.cluster.k = *k;
            }
            set(&mut c.cluster.max_iter, *max_iter);
            set(&mut c.cluster.sample_size, *sample_size);
            Some(input)
        }
        Command::SelectK {
            input,
            k_min,
            k_max,
            repeats,
            max_iter,
        } => {
            set(&mut c.select_k.k_min, *k_min);
            set(&mut c.select_k.k_max, *k_max);
            set(&mut c.select_k.repeats, *repeats);
            set(&mut c.select_k.max_iter, *max_iter);
            Some(input)
        }
        Command::Predict {
            input,
            split_fraction,
            trees,
            iterations,
            learning_rate,
        } => {
            set(&mut c.predict.split_fraction, *split_fraction);
            set(&mut c.predict.num_trees, *trees);
            set(&mut c.predict.iterations, *iterations);
            set(&mut c.predict.learning_rate, *learning_rate);
            Some(input)
        }
        Command::Run { input, k } => {
            if k.is_some() {
                c.cluster.k = *k;
            }
            Some(input)
        }
    };
    if let Some(path) = input.and_then(|i| i.manifest.clone()) {
        c.paths.manifest = Some(path);
    }
    c.validate()?;
    Ok(c)
}

fn dispatch(cli: &Cli, config: &RunConfig) -> Result<Vec<String>, CliError> {
    commands::prepare_output(&config.output_dir())?;
    let exec = RayonExecutor::new(cli.threads.map(|t| t as usize))
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let one = |line: String| vec![line];
    Ok(match &cli.command {
        Command::Synth { .. } => one(commands::synth(config, &exec)?),
        Command::Run { .. } => commands::run_all(config, &exec)?,
        command => {
            let manifest = commands::load_manifest(config)?;
            let corpus = &manifest.corpus;
            match command {
                Command::Ingest { .. } => one(commands::ingest(config, &manifest)?),
                Command::Objects { .. } => one(commands::objects(config, corpus)?),
                Command::Graph { .. } => one(commands::graph(config, corpus)?),
                Command::Cluster { .. } => one(commands::cluster(config, corpus)?),
                Command::SelectK { .. } => one(commands::select_k_stage(config, corpus, &exec)?.1),
                Command::Predict { .. } => one(commands::predict(config, corpus, &exec)?),
                Command::Synth { .. } | Command::Run { .. } => unreachable!(),
            }
        }
    })
}

/// Parses `args`, runs the command and returns the process exit code.
/// Failures are printed to stderr and, when the output directory is
/// usable, written to `error.json`.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
        }
    };
    let name = cli.command.name();
    let config = match effective_config(&cli, std::env::var(OUTPUT_DIR_ENV).ok()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("adscope {name}: error: {e}");
            return e.exit_code();
        }
    };
    match dispatch(&cli, &config) {
        Ok(lines) => {
            for line in lines {
                println!("{line}");
            }
            EXIT_OK
        }
        Err(e) => {
            let _ = write_json(&config.output_dir().join(files::ERROR), &e.document(name));
            eprintln!("adscope {name}: error: {e}");
            e.exit_code()
        }
    }
}
