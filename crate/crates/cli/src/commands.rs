//! Pipeline stages. Each reads the effective config, writes its reports into
//! the output directory and returns a one-line summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use adscope_core::catgraph::{build_graph, detect_communities, ObjectVertex};
use adscope_core::cluster::{fit_kmeans, profile_clusters, select_k, ClusterSummary, Points};
use adscope_core::corpus::{corpus_stats, CorpusStats};
use adscope_core::objstats::{
    detect_stop_objects, filter_stop_objects, object_frequencies, top_objects_per_category,
    ObjectFrequencyTable, StopObjectReport,
};
use adscope_core::predict::{evaluate_all, feature_set_name, FeatureKind, ModelKind};
use adscope_core::synth::{generate_corpus, SynthSpec};
use adscope_core::{Corpus, Executor};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::graph_export::{edges_tsv, graphml};
use crate::manifest::{parse_manifest, write_manifest, Manifest, VectorStorage};
use crate::report::{files, percent_2dp, sig6, write_json, write_report, write_text};

/// Creates the output directory and clears a stale error document.
pub fn prepare_output(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let error = dir.join(files::ERROR);
    match fs::remove_file(&error) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
        Err(e) => Err(CliError::io(&error, e)),
    }
}

pub fn load_manifest(config: &RunConfig) -> Result<Manifest, CliError> {
    let path = config.paths.manifest.as_ref().ok_or(CliError::NoManifest)?;
    Ok(parse_manifest(path)?)
}

#[derive(Serialize)]
struct SynthResult {
    manifest: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    sidecar: Option<&'static str>,
    num_records: usize,
    spec: SynthSpec,
}

pub fn synth<E: Executor>(config: &RunConfig, exec: &E) -> Result<String, CliError> {
    let dir = config.output_dir();
    let s = &config.synth;
    let spec = SynthSpec::standard(config.seed, s.num_records, s.dim, s.num_clusters);
    let (corpus, truth) = generate_corpus(&spec, exec)?;
    let storage = if s.sidecar {
        VectorStorage::Sidecar(files::SIDECAR.into())
    } else {
        VectorStorage::Inline
    };
    let manifest = dir.join(files::MANIFEST);
    write_manifest(&manifest, &corpus, &storage)?;
    write_json(&dir.join(files::PLANTED_TRUTH), &truth)?;
    let result = SynthResult {
        manifest: files::MANIFEST,
        sidecar: s.sidecar.then_some(files::SIDECAR),
        num_records: corpus.len(),
        spec,
    };
    write_report(&dir, files::SYNTH, "synth", config, result)?;
    Ok(format!(
        "synth: {} records -> {}",
        corpus.len(),
        manifest.display()
    ))
}

#[derive(Serialize)]
struct IngestResult {
    dim: usize,
    num_classes: u32,
    records: usize,
    duplicates_dropped: usize,
    stats: CorpusStats,
}

pub fn ingest(config: &RunConfig, manifest: &Manifest) -> Result<String, CliError> {
    let result = IngestResult {
        dim: manifest.header.dim,
        num_classes: manifest.header.num_classes,
        records: manifest.corpus.len(),
        duplicates_dropped: manifest.duplicates_dropped,
        stats: corpus_stats(&manifest.corpus),
    };
    write_report(
        &config.output_dir(),
        files::INGEST,
        "ingest",
        config,
        result,
    )?;
    Ok(format!(
        "ingest: {} records, {} duplicates dropped",
        manifest.corpus.len(),
        manifest.duplicates_dropped
    ))
}

/// Raw table, stop-objects, and the table with stop-objects removed.
fn object_tables(
    config: &RunConfig,
    corpus: &Corpus,
) -> Result<(ObjectFrequencyTable, StopObjectReport, ObjectFrequencyTable), CliError> {
    let table = object_frequencies(corpus)?;
    let stops = detect_stop_objects(&table, config.objects.stop_threshold)?;
    let filtered = filter_stop_objects(corpus, &stops)?;
    Ok((table, stops, filtered))
}

fn object_name(table: &ObjectFrequencyTable, class_id: u32) -> String {
    table.name(class_id).unwrap_or_default().to_string()
}

#[derive(Serialize)]
struct PercentEntry {
    class_id: u32,
    name: String,
    percent: f64,
}

#[derive(Serialize)]
struct CategoryObjects {
    ads: usize,
    top_objects: Vec<PercentEntry>,
}

#[derive(Serialize)]
struct ObjectsResult {
    total_ads: usize,
    distinct_objects: usize,
    stop_threshold: f64,
    stop_objects: Vec<PercentEntry>,
    /// Rankings after stop-object removal.
    categories: BTreeMap<String, CategoryObjects>,
}

pub fn objects(config: &RunConfig, corpus: &Corpus) -> Result<String, CliError> {
    let (table, stops, filtered) = object_tables(config, corpus)?;
    let ranking = top_objects_per_category(&filtered, config.objects.top_n)?;
    let categories = ranking
        .into_iter()
        .map(|(cat, ranked)| {
            let ads = filtered.category_sizes[&cat];
            let top_objects = ranked
                .into_iter()
                .map(|(class_id, f)| PercentEntry {
                    class_id,
                    name: object_name(&table, class_id),
                    percent: percent_2dp(f),
                })
                .collect();
            (cat, CategoryObjects { ads, top_objects })
        })
        .collect();
    let result = ObjectsResult {
        total_ads: table.total_ads,
        distinct_objects: table.object_counts.len(),
        stop_threshold: stops.threshold,
        stop_objects: stops
            .stop_objects
            .iter()
            .map(|s| PercentEntry {
                class_id: s.class_id,
                name: object_name(&table, s.class_id),
                percent: percent_2dp(s.corpus_fraction),
            })
            .collect(),
        categories,
    };
    let n_stop = result.stop_objects.len();
    write_report(
        &config.output_dir(),
        files::OBJECTS,
        "objects",
        config,
        result,
    )?;
    Ok(format!(
        "objects: {} ads, {} stop-objects",
        table.total_ads, n_stop
    ))
}

#[derive(Serialize)]
struct CommunityEntry {
    community: usize,
    categories: Vec<String>,
    objects: Vec<ObjectVertex>,
}

#[derive(Serialize)]
struct GraphResult {
    edge_threshold: f64,
    stop_objects_removed: Vec<u32>,
    num_categories: usize,
    num_objects: usize,
    num_vertices: usize,
    num_edges: usize,
    modularity: f64,
    num_communities: usize,
    communities: Vec<CommunityEntry>,
}

pub fn graph(config: &RunConfig, corpus: &Corpus) -> Result<String, CliError> {
    let (table, stops, filtered) = object_tables(config, corpus)?;
    let (source, removed) = if config.graph.remove_stop_objects {
        (&filtered, stops.class_ids().into_iter().collect())
    } else {
        (&table, Vec::new())
    };
    let graph = build_graph(source, config.graph.edge_threshold)?;
    let partition = detect_communities(&graph.skeleton(), config.seed)?;
    let communities = partition
        .members()
        .into_iter()
        .enumerate()
        .map(|(community, members)| {
            let mut entry = CommunityEntry {
                community,
                categories: Vec::new(),
                objects: Vec::new(),
            };
            for v in members {
                match v.checked_sub(graph.categories().len()) {
                    None => entry.categories.push(graph.categories()[v].clone()),
                    Some(o) => entry.objects.push(graph.objects()[o].clone()),
                }
            }
            entry
        })
        .collect();
    let result = GraphResult {
        edge_threshold: config.graph.edge_threshold,
        stop_objects_removed: removed,
        num_categories: graph.categories().len(),
        num_objects: graph.objects().len(),
        num_vertices: graph.num_vertices(),
        num_edges: graph.edges().len(),
        modularity: partition.modularity,
        num_communities: partition.num_communities,
        communities,
    };
    let dir = config.output_dir();
    write_text(
        &dir.join(files::GRAPH_EDGES),
        &edges_tsv(&graph, &partition),
    )?;
    write_text(&dir.join(files::GRAPHML), &graphml(&graph, &partition))?;
    let summary = format!(
        "graph: {} vertices, {} edges, {} communities, Q = {:.4}",
        result.num_vertices, result.num_edges, result.num_communities, result.modularity
    );
    write_report(&dir, files::GRAPH, "graph", config, result)?;
    Ok(summary)
}

/// Runs the k sweep and returns the selected k.
pub fn select_k_stage<E: Executor>(
    config: &RunConfig,
    corpus: &Corpus,
    exec: &E,
) -> Result<(usize, String), CliError> {
    let points = Points::from_corpus(corpus);
    let report = select_k(&points, &config.select_k_params(), config.seed, exec)?;
    let mut csv = String::from("k,mean_wcss\n");
    for p in &report.curve {
        let _ = writeln!(csv, "{},{}", p.k, p.mean_wcss);
    }
    let dir = config.output_dir();
    write_text(&dir.join(files::SELECT_K_CURVE), &csv)?;
    let k = report.selected_k;
    write_report(&dir, files::SELECT_K, "select_k", config, report)?;
    Ok((k, format!("select-k: selected k = {k}")))
}

#[derive(Serialize)]
struct ClusterResult {
    k: usize,
    num_points: usize,
    dim: usize,
    wcss: f64,
    iterations_run: usize,
    converged: bool,
    wcss_trace: Vec<f64>,
    sizes: Vec<usize>,
    stop_objects_excluded: Vec<u32>,
    profiles: Vec<ClusterSummary>,
    centroids: Vec<Vec<f64>>,
}

pub fn cluster(config: &RunConfig, corpus: &Corpus) -> Result<String, CliError> {
    let k = config
        .cluster
        .k
        .ok_or_else(|| CliError::Usage("cluster needs k (--k or cluster.k)".into()))?;
    let (_, stops, _) = object_tables(config, corpus)?;
    let points = Points::from_corpus(corpus);
    let model = fit_kmeans(&points, k, &config.kmeans_config(), config.seed)?;
    let mut params = config.profile_params();
    params.exclude_objects = stops.class_ids();
    let profiles = profile_clusters(corpus, &model, &params, config.seed)?;

    let mut csv = String::from("id,cluster\n");
    for (r, c) in corpus.records().iter().zip(&model.assignment) {
        let _ = writeln!(csv, "{},{c}", r.id);
    }
    let dir = config.output_dir();
    write_text(&dir.join(files::CLUSTER_ASSIGNMENTS), &csv)?;
    let summary = format!(
        "cluster: k = {k}, WCSS = {:.6e}, {} iterations",
        model.wcss, model.iterations_run
    );
    let result = ClusterResult {
        k,
        num_points: points.len(),
        dim: points.dim(),
        wcss: model.wcss,
        iterations_run: model.iterations_run,
        converged: model.converged,
        wcss_trace: model.wcss_trace,
        sizes: profiles.iter().map(|p| p.size).collect(),
        stop_objects_excluded: params.exclude_objects.into_iter().collect(),
        profiles,
        centroids: model.centroids,
    };
    write_report(&dir, files::CLUSTER, "cluster", config, result)?;
    Ok(summary)
}

/// One row of the RMSE table.
#[derive(Serialize)]
struct RmseRow {
    feature_set: &'static str,
    linear: f64,
    random_forest: f64,
    boosted_trees: f64,
}

#[derive(Serialize)]
struct PredictResult {
    n_filtered: usize,
    n_train: usize,
    n_test: usize,
    split_fraction: f64,
    correlations: adscope_core::predict::Correlations,
    baseline_test_rmse: f64,
    test_rmse: Vec<RmseRow>,
    train_rmse: Vec<RmseRow>,
}

pub fn predict<E: Executor>(
    config: &RunConfig,
    corpus: &Corpus,
    exec: &E,
) -> Result<String, CliError> {
    let report = evaluate_all(corpus, &config.eval_params(), config.seed, exec)?;
    let table = |test: bool| -> Vec<RmseRow> {
        FeatureKind::ALL
            .iter()
            .map(|&fs| {
                let value = |m: ModelKind| {
                    let cell = report.cell(fs, m).expect("evaluate_all fills every cell");
                    sig6(if test {
                        cell.test_rmse
                    } else {
                        cell.train_rmse
                    })
                };
                RmseRow {
                    feature_set: feature_set_name(fs),
                    linear: value(ModelKind::Linear),
                    random_forest: value(ModelKind::RandomForest),
                    boosted_trees: value(ModelKind::BoostedTrees),
                }
            })
            .collect()
    };
    let result = PredictResult {
        n_filtered: report.n_filtered,
        n_train: report.n_train,
        n_test: report.n_test,
        split_fraction: report.split_fraction,
        correlations: report.correlations.clone(),
        baseline_test_rmse: sig6(report.baseline_test_rmse),
        test_rmse: table(true),
        train_rmse: table(false),
    };
    let summary = format!(
        "predict: {} ads after filtering, {} train / {} test",
        report.n_filtered, report.n_train, report.n_test
    );
    write_report(
        &config.output_dir(),
        files::PREDICT,
        "predict",
        config,
        result,
    )?;
    Ok(summary)
}

/// Every analysis stage over one manifest. When `cluster.k` is unset the
/// k sweep runs first and its choice is used.
pub fn run_all<E: Executor>(config: &RunConfig, exec: &E) -> Result<Vec<String>, CliError> {
    let manifest = load_manifest(config)?;
    let corpus = &manifest.corpus;
    let mut lines = vec![
        ingest(config, &manifest)?,
        objects(config, corpus)?,
        graph(config, corpus)?,
    ];
    let mut cluster_config = config.clone();
    if config.cluster.k.is_none() {
        let (k, line) = select_k_stage(config, corpus, exec)?;
        lines.push(line);
        cluster_config.cluster.k = Some(k);
    }
    lines.push(cluster(&cluster_config, corpus)?);
    lines.push(predict(config, corpus, exec)?);
    Ok(lines)
}
