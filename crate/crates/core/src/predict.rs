//! CTR stage: ad filtering, correlations, feature sets, the three
//! regressors and held-out RMSE evaluation.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ctr, AdRecord, Corpus};
use crate::exec::Executor;
use crate::numeric::{compensated_sum, mean, Matrix};
use crate::rng::{derive_seed, domain, SplitMix64};
use crate::tree::{grow_tree, ColumnOrder, RegressionTree, TreeParams};

pub const DEFAULT_MIN_IMPRESSIONS: u64 = 5_000;
pub const DEFAULT_MAX_CTR: f64 = 0.2;
pub const DEFAULT_SPLIT_FRACTION: f64 = 0.8;
pub const DEFAULT_NUM_TREES: usize = 100;
pub const DEFAULT_BOOSTING_ITERATIONS: usize = 100;
pub const DEFAULT_LEARNING_RATE: f64 = 0.1;
/// Ridge penalty on the standardized Gram matrix when the design is rank
/// deficient.
pub const RIDGE_LAMBDA: f64 = 1e-8;
/// Relative size below which an R diagonal entry marks rank deficiency.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PredictError {
    #[error("undefined correlation: a series has zero variance")]
    UndefinedCorrelation,
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} values, got {got}")]
    TooFewValues { needed: usize, got: usize },
    #[error("no trainable records")]
    NoTrainableRecords,
    #[error("split fraction {0} not in (0, 1)")]
    InvalidFraction(f64),
    #[error("record without impressions reached the CTR stage")]
    UndefinedCtr,
    #[error("feature row has {found} columns, model expects {expected}")]
    FeatureMismatch { expected: usize, found: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(&'static str),
    #[error("internal invariant breach: boosting loss rose from {before} to {after} at iteration {iteration}")]
    LossIncreased {
        iteration: usize,
        before: f64,
        after: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    pub min_impressions: u64,
    pub max_ctr: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            min_impressions: DEFAULT_MIN_IMPRESSIONS,
            max_ctr: DEFAULT_MAX_CTR,
        }
    }
}

impl FilterParams {
    pub fn keeps(&self, record: &AdRecord) -> bool {
        record.impressions > 0
            && record.impressions >= self.min_impressions
            && ctr(record).is_ok_and(|c| c <= self.max_ctr)
    }
}

/// Keeps ads shown at least `min_impressions` times with CTR at most
/// `max_ctr`.
pub fn filter_ads(corpus: &Corpus, params: &FilterParams) -> Corpus {
    corpus.filtered(|r| params.keeps(r))
}

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, PredictError> {
    if x.len() != y.len() {
        return Err(PredictError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(PredictError::TooFewValues {
            needed: 2,
            got: x.len(),
        });
    }
    let mx = mean(x).unwrap_or(0.0);
    let my = mean(y).unwrap_or(0.0);
    let sxy = compensated_sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    let sxx = compensated_sum(x.iter().map(|a| (a - mx) * (a - mx)));
    let syy = compensated_sum(y.iter().map(|b| (b - my) * (b - my)));
    if sxx == 0.0 || syy == 0.0 {
        return Err(PredictError::UndefinedCorrelation);
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureKind {
    DimsOnly,
    VectorOnly,
    AllFeatures,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 3] = [
        FeatureKind::DimsOnly,
        FeatureKind::VectorOnly,
        FeatureKind::AllFeatures,
    ];

    pub fn dimension(self, embedding_dim: usize) -> usize {
        match self {
            FeatureKind::DimsOnly => 2,
            FeatureKind::VectorOnly => embedding_dim,
            FeatureKind::AllFeatures => embedding_dim + 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub kind: FeatureKind,
    pub dimension: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub targets: Vec<f64>,
    pub feature_set: FeatureSet,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(indices),
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            feature_set: self.feature_set,
        }
    }
}

/// Design matrix and CTR targets in corpus order.
pub fn build_features(corpus: &Corpus, kind: FeatureKind) -> Result<Dataset, PredictError> {
    if corpus.is_empty() {
        return Err(PredictError::NoTrainableRecords);
    }
    let cols = kind.dimension(corpus.dim());
    let mut data = Vec::with_capacity(corpus.len() * cols);
    let mut targets = Vec::with_capacity(corpus.len());
    for r in corpus.records() {
        if matches!(kind, FeatureKind::DimsOnly | FeatureKind::AllFeatures) {
            data.push(f64::from(r.width));
            data.push(f64::from(r.height));
        }
        if matches!(kind, FeatureKind::VectorOnly | FeatureKind::AllFeatures) {
            data.extend(r.vector.iter().map(|&v| f64::from(v)));
        }
        targets.push(ctr(r).map_err(|_| PredictError::UndefinedCtr)?);
    }
    Ok(Dataset {
        features: Matrix::new(corpus.len(), cols, data),
        targets,
        feature_set: FeatureSet {
            kind,
            dimension: cols,
        },
    })
}

/// Number of training rows for `n` rows at `fraction`: `ceil(fraction * n)`
/// with products within 1e-9 of an integer treated as that integer, clamped
/// to leave both sides non-empty.
pub fn train_size(n: usize, fraction: f64) -> usize {
    let x = fraction * n as f64;
    let nearest = libm::round(x);
    let size = if libm::fabs(x - nearest) < 1e-9 {
        nearest
    } else {
        libm::ceil(x)
    } as usize;
    size.clamp(1, n - 1)
}

/// Seeded permutation split into `(train, test)` row indices.
pub fn split_indices(
    n: usize,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), PredictError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(PredictError::InvalidFraction(fraction));
    }
    if n < 2 {
        return Err(PredictError::TooFewValues { needed: 2, got: n });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    SplitMix64::substream(seed, &[domain::SPLIT]).shuffle(&mut perm);
    let test = perm.split_off(train_size(n, fraction));
    Ok((perm, test))
}

pub fn split(data: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset), PredictError> {
    let (train, test) = split_indices(data.len(), fraction, seed)?;
    Ok((data.select(&train), data.select(&test)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    Linear,
    RandomForest,
    BoostedTrees,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [
        ModelKind::Linear,
        ModelKind::RandomForest,
        ModelKind::BoostedTrees,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub num_trees: usize,
    pub tree: TreeParams,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            num_trees: DEFAULT_NUM_TREES,
            tree: TreeParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostingParams {
    pub iterations: usize,
    pub learning_rate: f64,
    pub tree: TreeParams,
}

impl Default for BoostingParams {
    fn default() -> Self {
        Self {
            iterations: DEFAULT_BOOSTING_ITERATIONS,
            learning_rate: DEFAULT_LEARNING_RATE,
            tree: TreeParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelParams {
    Linear {
        weights: Vec<f64>,
        intercept: f64,
        /// True when the ridge fallback was used.
        regularized: bool,
    },
    RandomForest {
        trees: Vec<RegressionTree>,
        params: ForestParams,
    },
    BoostedTrees {
        base: f64,
        trees: Vec<RegressionTree>,
        params: BoostingParams,
        /// Training MSE after the base prediction and after each tree.
        training_loss: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    pub kind: ModelKind,
    pub feature_set: FeatureSet,
    pub seed: u64,
    pub params: ModelParams,
}

impl RegressionModel {
    pub fn predict(&self, row: &[f64]) -> Result<f64, PredictError> {
        if row.len() != self.feature_set.dimension {
            return Err(PredictError::FeatureMismatch {
                expected: self.feature_set.dimension,
                found: row.len(),
            });
        }
        Ok(match &self.params {
            ModelParams::Linear {
                weights, intercept, ..
            } => intercept + weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>(),
            ModelParams::RandomForest { trees, .. } => {
                let mut values: Vec<f64> = trees.iter().map(|t| t.predict(row)).collect();
                values.sort_by(f64::total_cmp);
                compensated_sum(values) / trees.len().max(1) as f64
            }
            ModelParams::BoostedTrees {
                base,
                trees,
                params,
                ..
            } => {
                let mut value = *base;
                for t in trees {
                    value += params.learning_rate * t.predict(row);
                }
                value
            }
        })
    }

    pub fn predict_all(&self, x: &Matrix) -> Result<Vec<f64>, PredictError> {
        (0..x.rows()).map(|i| self.predict(x.row(i))).collect()
    }
}

/// Least squares with intercept on standardized columns, solved by QR.
/// Rank-deficient designs fall back to ridge on the standardized Gram
/// matrix with two steps of iterative refinement. Weights are reported in
/// the original feature units.
pub fn train_linear(train: &Dataset) -> Result<RegressionModel, PredictError> {
    let n = train.len();
    if n == 0 {
        return Err(PredictError::NoTrainableRecords);
    }
    let x = &train.features;
    let p = x.cols();
    let y_mean = mean(&train.targets).unwrap_or(0.0);

    let mut centres = vec![0.0; p];
    let mut scales = vec![0.0; p];
    let mut active = Vec::new();
    for j in 0..p {
        let col: Vec<f64> = (0..n).map(|i| x.get(i, j)).collect();
        let mu = mean(&col).unwrap_or(0.0);
        let var = compensated_sum(col.iter().map(|v| (v - mu) * (v - mu))) / n as f64;
        centres[j] = mu;
        scales[j] = libm::sqrt(var);
        if scales[j] > 0.0 {
            active.push(j);
        }
    }

    let mut weights = vec![0.0; p];
    let mut regularized = false;
    if !active.is_empty() {
        let z = DMatrix::from_fn(n, active.len(), |i, a| {
            let j = active[a];
            (x.get(i, j) - centres[j]) / scales[j]
        });
        let yc = DVector::from_fn(n, |i, _| train.targets[i] - y_mean);
        let beta = solve_least_squares(&z, &yc, &mut regularized);
        for (a, &j) in active.iter().enumerate() {
            weights[j] = beta[a] / scales[j];
        }
    }
    let intercept = y_mean - compensated_sum(weights.iter().zip(&centres).map(|(w, c)| w * c));
    Ok(RegressionModel {
        kind: ModelKind::Linear,
        feature_set: train.feature_set,
        seed: 0,
        params: ModelParams::Linear {
            weights,
            intercept,
            regularized,
        },
    })
}

fn solve_least_squares(z: &DMatrix<f64>, y: &DVector<f64>, regularized: &mut bool) -> DVector<f64> {
    let (n, p) = z.shape();
    if n >= p {
        let qr = z.clone().qr();
        let r = qr.r();
        let diag: Vec<f64> = (0..p).map(|i| libm::fabs(r[(i, i)])).collect();
        let largest = diag.iter().copied().fold(0.0, f64::max);
        if diag.iter().all(|&d| d > RANK_TOLERANCE * largest) {
            let qty = qr.q().transpose() * y;
            if let Some(beta) = r.solve_upper_triangular(&qty) {
                if beta.iter().all(|b| b.is_finite()) {
                    return beta;
                }
            }
        }
    }
    *regularized = true;
    let scale = 1.0 / n as f64;
    let mut gram = z.transpose() * z * scale;
    for i in 0..p {
        gram[(i, i)] += RIDGE_LAMBDA;
    }
    let chol = gram
        .cholesky()
        .expect("ridge-regularized Gram matrix is positive definite");
    let mut beta = chol.solve(&(z.transpose() * y * scale));
    for _ in 0..2 {
        let residual = y - z * &beta;
        beta += chol.solve(&(z.transpose() * residual * scale));
    }
    beta
}

fn check_tree(params: &TreeParams) -> Result<(), PredictError> {
    if params.max_depth == 0 {
        return Err(PredictError::InvalidHyperparameter(
            "max_depth must be >= 1",
        ));
    }
    if params.min_leaf == 0 {
        return Err(PredictError::InvalidHyperparameter("min_leaf must be >= 1"));
    }
    Ok(())
}

/// Bagged regression trees: bootstrap rows per tree, `max(1, d/3)`
/// candidate features per split, prediction is the mean over trees.
pub fn train_random_forest<E: Executor + ?Sized>(
    train: &Dataset,
    params: &ForestParams,
    seed: u64,
    exec: &E,
) -> Result<RegressionModel, PredictError> {
    let n = train.len();
    if n == 0 {
        return Err(PredictError::NoTrainableRecords);
    }
    if params.num_trees == 0 {
        return Err(PredictError::InvalidHyperparameter(
            "num_trees must be >= 1",
        ));
    }
    check_tree(&params.tree)?;
    let d = train.features.cols();
    let tree_params = TreeParams {
        max_features: Some(params.tree.max_features.unwrap_or((d / 3).max(1))),
        ..params.tree
    };
    let order = ColumnOrder::new(&train.features);
    let trees = exec.map_indexed(params.num_trees, |t| {
        let mut rng = SplitMix64::substream(seed, &[domain::FOREST_TREE, t as u64]);
        let rows: Vec<usize> = (0..n).map(|_| rng.index(n)).collect();
        let targets: Vec<f64> = rows.iter().map(|&r| train.targets[r]).collect();
        grow_tree(
            &train.features,
            &order,
            &rows,
            &targets,
            tree_params,
            Some(&mut rng),
        )
    });
    Ok(RegressionModel {
        kind: ModelKind::RandomForest,
        feature_set: train.feature_set,
        seed,
        params: ModelParams::RandomForest {
            trees,
            params: ForestParams {
                num_trees: params.num_trees,
                tree: tree_params,
            },
        },
    })
}

fn mse(residuals: &[f64]) -> f64 {
    compensated_sum(residuals.iter().map(|r| r * r)) / residuals.len() as f64
}

/// Gradient boosting on squared loss: start from the target mean and add
/// `learning_rate` times a tree fitted to the current residuals, for
/// `iterations` rounds.
pub fn train_boosted_trees(
    train: &Dataset,
    params: &BoostingParams,
    seed: u64,
) -> Result<RegressionModel, PredictError> {
    let n = train.len();
    if n == 0 {
        return Err(PredictError::NoTrainableRecords);
    }
    if !(params.learning_rate > 0.0 && params.learning_rate <= 1.0) {
        return Err(PredictError::InvalidHyperparameter(
            "learning_rate must be in (0, 1]",
        ));
    }
    check_tree(&params.tree)?;
    let x = &train.features;
    let base = mean(&train.targets).unwrap_or(0.0);
    let mut fitted = vec![base; n];
    let mut residuals: Vec<f64> = train.targets.iter().map(|y| y - base).collect();
    let mut loss = mse(&residuals);
    let mut training_loss = vec![loss];
    let order = ColumnOrder::new(x);
    let rows: Vec<usize> = (0..n).collect();
    let mut rng = SplitMix64::substream(seed, &[domain::BOOSTING]);
    let mut trees = Vec::with_capacity(params.iterations);
    for iteration in 1..=params.iterations {
        let tree = grow_tree(x, &order, &rows, &residuals, params.tree, Some(&mut rng));
        for i in 0..n {
            fitted[i] += params.learning_rate * tree.predict(x.row(i));
            residuals[i] = train.targets[i] - fitted[i];
        }
        let next = mse(&residuals);
        if next > loss {
            return Err(PredictError::LossIncreased {
                iteration,
                before: loss,
                after: next,
            });
        }
        loss = next;
        training_loss.push(loss);
        trees.push(tree);
    }
    Ok(RegressionModel {
        kind: ModelKind::BoostedTrees,
        feature_set: train.feature_set,
        seed,
        params: ModelParams::BoostedTrees {
            base,
            trees,
            params: *params,
            training_loss,
        },
    })
}

/// Root-mean-square error.
pub fn rmse(predictions: &[f64], targets: &[f64]) -> Result<f64, PredictError> {
    if predictions.len() != targets.len() {
        return Err(PredictError::LengthMismatch(
            predictions.len(),
            targets.len(),
        ));
    }
    if predictions.is_empty() {
        return Err(PredictError::TooFewValues { needed: 1, got: 0 });
    }
    let sse = compensated_sum(
        predictions
            .iter()
            .zip(targets)
            .map(|(p, t)| (p - t) * (p - t)),
    );
    Ok(libm::sqrt(sse / predictions.len() as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalParams {
    pub filter: FilterParams,
    pub split_fraction: f64,
    pub forest: ForestParams,
    pub boosting: BoostingParams,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            filter: FilterParams::default(),
            split_fraction: DEFAULT_SPLIT_FRACTION,
            forest: ForestParams::default(),
            boosting: BoostingParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub feature_set: FeatureKind,
    pub model: ModelKind,
    pub train_rmse: f64,
    pub test_rmse: f64,
}

/// CTR correlations; `None` where a series has zero variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlations {
    pub width: Option<f64>,
    pub height: Option<f64>,
    pub pixels: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_filtered: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub split_fraction: f64,
    pub seed: u64,
    pub correlations: Correlations,
    /// Held-out RMSE of predicting the training mean.
    pub baseline_test_rmse: f64,
    pub cells: Vec<EvalCell>,
}

impl EvalReport {
    pub fn cell(&self, feature_set: FeatureKind, model: ModelKind) -> Option<&EvalCell> {
        self.cells
            .iter()
            .find(|c| c.feature_set == feature_set && c.model == model)
    }
}

fn correlation_or_none(x: &[f64], y: &[f64]) -> Result<Option<f64>, PredictError> {
    match pearson(x, y) {
        Ok(r) => Ok(Some(r)),
        Err(PredictError::UndefinedCorrelation | PredictError::TooFewValues { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Seed used for one model kind inside [`evaluate_all`].
pub fn model_seed(seed: u64, model: ModelKind) -> u64 {
    derive_seed(seed, &[domain::SPLIT, model as u64 + 1])
}

/// Filters the corpus, splits once, and trains every model kind on every
/// feature set.
pub fn evaluate_all<E: Executor + ?Sized>(
    corpus: &Corpus,
    params: &EvalParams,
    seed: u64,
    exec: &E,
) -> Result<EvalReport, PredictError> {
    let filtered = filter_ads(corpus, &params.filter);
    if filtered.is_empty() {
        return Err(PredictError::NoTrainableRecords);
    }
    let widths: Vec<f64> = filtered
        .records()
        .iter()
        .map(|r| f64::from(r.width))
        .collect();
    let heights: Vec<f64> = filtered
        .records()
        .iter()
        .map(|r| f64::from(r.height))
        .collect();
    let pixels: Vec<f64> = filtered
        .records()
        .iter()
        .map(|r| r.pixels() as f64)
        .collect();
    let ctrs = build_features(&filtered, FeatureKind::DimsOnly)?.targets;
    let correlations = Correlations {
        width: correlation_or_none(&widths, &ctrs)?,
        height: correlation_or_none(&heights, &ctrs)?,
        pixels: correlation_or_none(&pixels, &ctrs)?,
    };

    let (train_idx, test_idx) = split_indices(filtered.len(), params.split_fraction, seed)?;
    let train_targets: Vec<f64> = train_idx.iter().map(|&i| ctrs[i]).collect();
    let test_targets: Vec<f64> = test_idx.iter().map(|&i| ctrs[i]).collect();
    let train_mean = mean(&train_targets).unwrap_or(0.0);
    let baseline_test_rmse = rmse(&vec![train_mean; test_targets.len()], &test_targets)?;

    let mut cells = Vec::with_capacity(9);
    for kind in FeatureKind::ALL {
        let data = build_features(&filtered, kind)?;
        let train = data.select(&train_idx);
        let test = data.select(&test_idx);
        for model_kind in ModelKind::ALL {
            let s = model_seed(seed, model_kind);
            let model = match model_kind {
                ModelKind::Linear => train_linear(&train)?,
                ModelKind::RandomForest => train_random_forest(&train, &params.forest, s, exec)?,
                ModelKind::BoostedTrees => train_boosted_trees(&train, &params.boosting, s)?,
            };
            cells.push(EvalCell {
                feature_set: kind,
                model: model_kind,
                train_rmse: rmse(&model.predict_all(&train.features)?, &train.targets)?,
                test_rmse: rmse(&model.predict_all(&test.features)?, &test.targets)?,
            });
        }
    }
    Ok(EvalReport {
        n_filtered: filtered.len(),
        n_train: train_idx.len(),
        n_test: test_idx.len(),
        split_fraction: params.split_fraction,
        seed,
        correlations,
        baseline_test_rmse,
        cells,
    })
}

/// Human-readable model name used in reports.
pub fn model_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Linear => "linear",
        ModelKind::RandomForest => "random_forest",
        ModelKind::BoostedTrees => "boosted_trees",
    }
}

pub fn feature_set_name(kind: FeatureKind) -> &'static str {
    match kind {
        FeatureKind::DimsOnly => "dims_only",
        FeatureKind::VectorOnly => "vector_only",
        FeatureKind::AllFeatures => "all_features",
    }
}
