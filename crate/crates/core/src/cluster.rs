//! k-means++ clustering, the mean-WCSS k sweep and cluster profiles.
//!
//! Distances are squared Euclidean in `f64`; WCSS and centroid means use
//! compensated summation. Every fit records its per-iteration WCSS trace and
//! refuses to return a result whose trace ever increases.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::exec::Executor;
use crate::numeric::{squared_distance, CompensatedSum};
use crate::rng::{derive_seed, domain, SplitMix64};

pub const DEFAULT_MAX_ITER: usize = 15;
pub const DEFAULT_K_RANGE: (usize, usize) = (2, 50);
pub const DEFAULT_REPEATS: usize = 50;
pub const DEFAULT_SAMPLE_SIZE: usize = 50;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClusterError {
    #[error("no points to cluster")]
    NoPoints,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("k = {k} exceeds the number of distinct points ({distinct})")]
    TooFewDistinctPoints { k: usize, distinct: usize },
    #[error("max_iter must be at least 1")]
    ZeroMaxIter,
    #[error("repeats must be at least 1")]
    ZeroRepeats,
    #[error("invalid k range [{0}, {1}]")]
    InvalidRange(usize, usize),
    #[error("k_max = {k_max} exceeds the number of points ({n})")]
    RangeExceedsPoints { k_max: usize, n: usize },
    #[error("rows must all have dimension {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("model assigns {model} points but the corpus has {corpus} records")]
    ModelCorpusMismatch { model: usize, corpus: usize },
    #[error(
        "internal invariant breach: WCSS rose from {before} to {after} at iteration {iteration}"
    )]
    WcssIncreased {
        iteration: usize,
        before: f64,
        after: f64,
    },
}

/// Dense row-major point set.
#[derive(Debug, Clone, PartialEq)]
pub struct Points {
    data: Vec<f64>,
    dim: usize,
}

impl Points {
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, ClusterError> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(ClusterError::DimensionMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { data, dim })
    }

    /// Embedding vectors of `corpus`, widened to `f64`.
    pub fn from_corpus(corpus: &Corpus) -> Self {
        let data = corpus
            .records()
            .iter()
            .flat_map(|r| r.vector.iter().map(|&v| f64::from(v)))
            .collect();
        Self {
            data,
            dim: corpus.dim(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Number of distinct rows (`-0.0` and `0.0` compare equal).
    pub fn distinct_count(&self) -> usize {
        let cmp = |a: &usize, b: &usize| -> Ordering {
            self.row(*a)
                .iter()
                .zip(self.row(*b))
                .map(|(x, y)| x.partial_cmp(y).unwrap_or(Ordering::Equal))
                .find(|o| *o != Ordering::Equal)
                .unwrap_or(Ordering::Equal)
        };
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_unstable_by(cmp);
        let mut count = usize::from(!idx.is_empty());
        for w in idx.windows(2) {
            if cmp(&w[0], &w[1]) != Ordering::Equal {
                count += 1;
            }
        }
        count
    }
}

/// Centroid initialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Seeding {
    /// D²-weighted seeding. Each new centroid is the best (lowest resulting
    /// potential) of `trials` D²-sampled candidates; `None` uses
    /// `2 + floor(ln k)` and `Some(1)` is the single-draw variant.
    KMeansPlusPlus { trials: Option<usize> },
    /// `k` distinct point indices drawn uniformly.
    Uniform,
}

impl Default for Seeding {
    fn default() -> Self {
        Seeding::KMeansPlusPlus { trials: None }
    }
}

impl Seeding {
    fn trials(&self, k: usize) -> usize {
        match *self {
            Seeding::KMeansPlusPlus { trials: Some(t) } => t.max(1),
            Seeding::KMeansPlusPlus { trials: None } => 2 + libm::log(k as f64) as usize,
            Seeding::Uniform => 1,
        }
    }
}

fn check_k(points: &Points, k: usize) -> Result<(), ClusterError> {
    if points.is_empty() {
        return Err(ClusterError::NoPoints);
    }
    if k == 0 {
        return Err(ClusterError::ZeroK);
    }
    if k > points.len() {
        return Err(ClusterError::TooFewDistinctPoints {
            k,
            distinct: points.distinct_count(),
        });
    }
    let distinct = points.distinct_count();
    if k > distinct {
        return Err(ClusterError::TooFewDistinctPoints { k, distinct });
    }
    Ok(())
}

/// Index of a D²-weighted draw; only points with positive weight can win.
fn sample_weighted(rng: &mut SplitMix64, weights: &[f64], total: f64) -> usize {
    let target = rng.next_f64() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if target < acc {
                return i;
            }
        }
    }
    last
}

/// k-means++ seeding: the first centroid is a uniform point, each further
/// one is drawn with probability proportional to its squared distance from
/// the nearest chosen centroid. Returns the chosen point indices.
pub fn seed_kmeanspp(
    points: &Points,
    k: usize,
    trials: usize,
    rng: &mut SplitMix64,
) -> Result<Vec<usize>, ClusterError> {
    check_k(points, k)?;
    let n = points.len();
    let trials = trials.max(1);
    let first = rng.index(n);
    let mut chosen = vec![first];
    let mut d2: Vec<f64> = (0..n)
        .map(|i| squared_distance(points.row(i), points.row(first)))
        .collect();
    while chosen.len() < k {
        let total = compensated(d2.iter().copied());
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for _ in 0..trials {
            let candidate = sample_weighted(rng, &d2, total);
            let updated: Vec<f64> = (0..n)
                .map(|i| d2[i].min(squared_distance(points.row(i), points.row(candidate))))
                .collect();
            let potential = if trials == 1 {
                0.0
            } else {
                compensated(updated.iter().copied())
            };
            if best.as_ref().is_none_or(|(p, _, _)| potential < *p) {
                best = Some((potential, candidate, updated));
            }
        }
        let (_, candidate, updated) = best.expect("at least one trial");
        chosen.push(candidate);
        d2 = updated;
    }
    Ok(chosen)
}

fn seed_uniform(
    points: &Points,
    k: usize,
    rng: &mut SplitMix64,
) -> Result<Vec<usize>, ClusterError> {
    check_k(points, k)?;
    let mut idx: Vec<usize> = (0..points.len()).collect();
    rng.partial_shuffle(&mut idx, k);
    idx.truncate(k);
    Ok(idx)
}

fn compensated(values: impl Iterator<Item = f64>) -> f64 {
    let mut acc = CompensatedSum::new();
    acc.extend(values);
    acc.value()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub max_iter: usize,
    pub seeding: Seeding,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            max_iter: DEFAULT_MAX_ITER,
            seeding: Seeding::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    pub wcss: f64,
    pub iterations_run: usize,
    /// True when the last iteration left every assignment unchanged.
    pub converged: bool,
    pub seed: u64,
    /// WCSS after seeding, then after every Lloyd iteration.
    pub wcss_trace: Vec<f64>,
}

/// Nearest centroid (ties to the lowest index) and its squared distance.
pub fn nearest_centroid(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = squared_distance(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn assign(points: &Points, centroids: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>, f64) {
    let mut assignment = Vec::with_capacity(points.len());
    let mut dist = Vec::with_capacity(points.len());
    let mut total = CompensatedSum::new();
    for i in 0..points.len() {
        let (c, d) = nearest_centroid(points.row(i), centroids);
        assignment.push(c);
        dist.push(d);
        total.add(d);
    }
    (assignment, dist, total.value())
}

/// Means of the assigned points. An empty cluster takes over the point that
/// lies farthest from its own centroid (never the last member of a cluster).
fn update(points: &Points, assignment: &mut [usize], dist: &[f64], k: usize) -> Vec<Vec<f64>> {
    let mut sizes = vec![0usize; k];
    for &c in assignment.iter() {
        sizes[c] += 1;
    }
    let mut taken = BTreeSet::new();
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let donor = (0..points.len())
            .filter(|&i| !taken.contains(&i) && sizes[assignment[i]] > 1)
            .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)));
        if let Some(p) = donor {
            sizes[assignment[p]] -= 1;
            sizes[empty] += 1;
            assignment[p] = empty;
            taken.insert(p);
        }
    }
    let dim = points.dim();
    let mut sums = vec![CompensatedSum::new(); k * dim];
    for (i, &c) in assignment.iter().enumerate() {
        for (j, &x) in points.row(i).iter().enumerate() {
            sums[c * dim + j].add(x);
        }
    }
    let mut means: Vec<Vec<f64>> = (0..k)
        .map(|c| {
            let size = sizes[c].max(1) as f64;
            (0..dim).map(|j| sums[c * dim + j].value() / size).collect()
        })
        .collect();
    // One residual pass, so a cluster of identical points gets that point
    // back exactly.
    let mut residuals = vec![CompensatedSum::new(); k * dim];
    for (i, &c) in assignment.iter().enumerate() {
        for (j, &x) in points.row(i).iter().enumerate() {
            residuals[c * dim + j].add(x - means[c][j]);
        }
    }
    for (c, mean) in means.iter_mut().enumerate() {
        let size = sizes[c].max(1) as f64;
        for (j, m) in mean.iter_mut().enumerate() {
            *m += residuals[c * dim + j].value() / size;
        }
    }
    means
}

/// Relative WCSS rise attributed to rounding rather than a faulty update.
const WCSS_ROUNDING: f64 = 1e-9;

fn lloyd(
    points: &Points,
    initial: Vec<usize>,
    max_iter: usize,
    seed: u64,
) -> Result<ClusterModel, ClusterError> {
    let k = initial.len();
    let mut centroids: Vec<Vec<f64>> = initial.iter().map(|&i| points.row(i).to_vec()).collect();
    let (mut assignment, mut dist, mut wcss) = assign(points, &centroids);
    let mut trace = vec![wcss];
    let mut converged = false;
    let mut iterations_run = 0;
    for iteration in 1..=max_iter {
        let mut repaired = assignment.clone();
        let next_centroids = update(points, &mut repaired, &dist, k);
        let (next_assignment, next_dist, next_wcss) = assign(points, &next_centroids);
        iterations_run = iteration;
        if next_wcss > wcss {
            if next_wcss <= wcss * (1.0 + WCSS_ROUNDING) {
                // A fixed point up to rounding: keep the previous state.
                converged = true;
                break;
            }
            return Err(ClusterError::WcssIncreased {
                iteration,
                before: wcss,
                after: next_wcss,
            });
        }
        trace.push(next_wcss);
        let unchanged = next_assignment == assignment;
        centroids = next_centroids;
        assignment = next_assignment;
        dist = next_dist;
        wcss = next_wcss;
        if unchanged {
            converged = true;
            break;
        }
    }
    Ok(ClusterModel {
        k,
        centroids,
        assignment,
        wcss,
        iterations_run,
        converged,
        seed,
        wcss_trace: trace,
    })
}

/// k-means with the configured seeding and at most `max_iter` Lloyd
/// iterations (assign, recompute means) or until assignments stop changing.
pub fn fit_kmeans(
    points: &Points,
    k: usize,
    config: &KMeansConfig,
    seed: u64,
) -> Result<ClusterModel, ClusterError> {
    if config.max_iter == 0 {
        return Err(ClusterError::ZeroMaxIter);
    }
    let mut rng = SplitMix64::substream(seed, &[domain::KMEANS]);
    let initial = match config.seeding {
        Seeding::Uniform => seed_uniform(points, k, &mut rng)?,
        s @ Seeding::KMeansPlusPlus { .. } => seed_kmeanspp(points, k, s.trials(k), &mut rng)?,
    };
    lloyd(points, initial, config.max_iter, seed)
}

/// Sum of squared distances from each point to its assigned centroid.
pub fn wcss(points: &Points, centroids: &[Vec<f64>], assignment: &[usize]) -> f64 {
    compensated(
        (0..points.len()).map(|i| squared_distance(points.row(i), &centroids[assignment[i]])),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectKParams {
    pub k_min: usize,
    pub k_max: usize,
    pub repeats: usize,
    pub kmeans: KMeansConfig,
}

impl Default for SelectKParams {
    fn default() -> Self {
        Self {
            k_min: DEFAULT_K_RANGE.0,
            k_max: DEFAULT_K_RANGE.1,
            repeats: DEFAULT_REPEATS,
            kmeans: KMeansConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KCurvePoint {
    pub k: usize,
    pub mean_wcss: f64,
    /// `k` exceeds the number of distinct points; every distinct point is a
    /// centroid and WCSS is exactly 0, so no fit was run.
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelectionReport {
    pub k_min: usize,
    pub k_max: usize,
    pub repeats: usize,
    pub max_iter: usize,
    pub seed: u64,
    pub curve: Vec<KCurvePoint>,
    pub selected_k: usize,
}

/// Seed of repeat `repeat` at cluster count `k`.
pub fn repeat_seed(seed: u64, k: usize, repeat: usize) -> u64 {
    derive_seed(seed, &[domain::SELECT_K, k as u64, repeat as u64])
}

/// Fits every `k` in range `repeats` times, averages WCSS per `k` and picks
/// the lowest mean (smallest `k` on ties).
pub fn select_k<E: Executor + ?Sized>(
    points: &Points,
    params: &SelectKParams,
    seed: u64,
    exec: &E,
) -> Result<KSelectionReport, ClusterError> {
    let SelectKParams {
        k_min,
        k_max,
        repeats,
        kmeans,
    } = *params;
    if points.is_empty() {
        return Err(ClusterError::NoPoints);
    }
    if k_min == 0 || k_min > k_max {
        return Err(ClusterError::InvalidRange(k_min, k_max));
    }
    if repeats == 0 {
        return Err(ClusterError::ZeroRepeats);
    }
    if kmeans.max_iter == 0 {
        return Err(ClusterError::ZeroMaxIter);
    }
    if k_max > points.len() {
        return Err(ClusterError::RangeExceedsPoints {
            k_max,
            n: points.len(),
        });
    }
    let distinct = points.distinct_count();
    let ks = k_max - k_min + 1;
    let results = exec.map_indexed(ks * repeats, |task| {
        let k = k_min + task / repeats;
        let r = task % repeats;
        if k > distinct {
            return Ok(0.0);
        }
        fit_kmeans(points, k, &kmeans, repeat_seed(seed, k, r)).map(|m| m.wcss)
    });
    let mut curve = Vec::with_capacity(ks);
    for (i, chunk) in results.chunks(repeats).enumerate() {
        let mut total = CompensatedSum::new();
        for w in chunk {
            total.add(w.clone()?);
        }
        let k = k_min + i;
        curve.push(KCurvePoint {
            k,
            mean_wcss: total.value() / repeats as f64,
            saturated: k > distinct,
        });
    }
    let selected_k = curve
        .iter()
        .min_by(|a, b| a.mean_wcss.total_cmp(&b.mean_wcss).then(a.k.cmp(&b.k)))
        .map(|p| p.k)
        .expect("non-empty range");
    Ok(KSelectionReport {
        k_min,
        k_max,
        repeats,
        max_iter: kmeans.max_iter,
        seed,
        curve,
        selected_k,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileParams {
    pub sample_size: usize,
    pub top_n: usize,
    /// Objects left out of the per-cluster object ranking.
    pub exclude_objects: BTreeSet<u32>,
}

impl Default for ProfileParams {
    fn default() -> Self {
        Self {
            sample_size: DEFAULT_SAMPLE_SIZE,
            top_n: 5,
            exclude_objects: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedObject {
    pub class_id: u32,
    pub name: String,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster: usize,
    pub size: usize,
    pub top_categories: Vec<(String, f64)>,
    pub top_objects: Vec<RankedObject>,
    pub mean_width: Option<f64>,
    pub mean_height: Option<f64>,
    /// Uniform sample without replacement of member ids, in corpus order.
    pub sample_ids: Vec<String>,
}

/// Per-cluster category and object make-up, mean dimensions and a random
/// member sample.
pub fn profile_clusters(
    corpus: &Corpus,
    model: &ClusterModel,
    params: &ProfileParams,
    seed: u64,
) -> Result<Vec<ClusterSummary>, ClusterError> {
    if model.assignment.len() != corpus.len() {
        return Err(ClusterError::ModelCorpusMismatch {
            model: model.assignment.len(),
            corpus: corpus.len(),
        });
    }
    let mut members = vec![Vec::new(); model.k];
    for (i, &c) in model.assignment.iter().enumerate() {
        members[c].push(i);
    }
    let records = corpus.records();
    Ok(members
        .into_iter()
        .enumerate()
        .map(|(cluster, idx)| {
            let size = idx.len();
            let denom = size as f64;
            let mut cats: BTreeMap<&str, usize> = BTreeMap::new();
            let mut objs: BTreeMap<u32, (usize, &str)> = BTreeMap::new();
            let (mut w, mut h) = (0u64, 0u64);
            for &i in &idx {
                let r = &records[i];
                *cats.entry(r.category.as_str()).or_insert(0) += 1;
                for class_id in r.object_set() {
                    if params.exclude_objects.contains(&class_id) {
                        continue;
                    }
                    let name = r
                        .labels
                        .iter()
                        .find(|l| l.class_id == class_id)
                        .map_or("", |l| l.name.as_str());
                    objs.entry(class_id).or_insert((0, name)).0 += 1;
                }
                w += u64::from(r.width);
                h += u64::from(r.height);
            }
            let mut top_categories: Vec<(String, f64)> = cats
                .into_iter()
                .map(|(c, n)| (String::from(c), n as f64 / denom))
                .collect();
            top_categories.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            top_categories.truncate(params.top_n);
            let mut top_objects: Vec<RankedObject> = objs
                .into_iter()
                .map(|(class_id, (n, name))| RankedObject {
                    class_id,
                    name: name.into(),
                    fraction: n as f64 / denom,
                })
                .collect();
            top_objects.sort_by(|a, b| {
                b.fraction
                    .total_cmp(&a.fraction)
                    .then(a.class_id.cmp(&b.class_id))
            });
            top_objects.truncate(params.top_n);

            let take = params.sample_size.min(size);
            let mut pool = idx.clone();
            let mut rng = SplitMix64::substream(seed, &[domain::PROFILE_SAMPLE, cluster as u64]);
            rng.partial_shuffle(&mut pool, take);
            let mut sample: Vec<usize> = pool[..take].to_vec();
            sample.sort_unstable();

            ClusterSummary {
                cluster,
                size,
                top_categories,
                top_objects,
                mean_width: (size > 0).then(|| w as f64 / denom),
                mean_height: (size > 0).then(|| h as f64 / denom),
                sample_ids: sample.into_iter().map(|i| records[i].id.clone()).collect(),
            }
        })
        .collect())
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must cover the same items");
    let n = a.len();
    let pairs = |x: usize| (x * x.saturating_sub(1) / 2) as f64;
    let mut table: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut rows: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cols: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_insert(0) += 1;
        *rows.entry(x).or_insert(0) += 1;
        *cols.entry(y).or_insert(0) += 1;
    }
    let index: f64 = table.values().map(|&c| pairs(c)).sum();
    let row_sum: f64 = rows.values().map(|&c| pairs(c)).sum();
    let col_sum: f64 = cols.values().map(|&c| pairs(c)).sum();
    let total = pairs(n);
    if total == 0.0 {
        return 1.0;
    }
    let expected = row_sum * col_sum / total;
    let max = (row_sum + col_sum) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}
