//! Confidence-weighted features, closed-form ridge regression, k-fold
//! cross-validation and the formula ablations.
//!
//! Every statistic a fold uses (standardization, imputation means, ρ for
//! the ablations, λ selection) is computed from that fold's training rows
//! only.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::alignment::{pearson_r, spearman_rho};
use crate::attribute::{Attribute, PerAttribute, N_ATTRIBUTES};
use crate::corpus::{compare_ids, Corpus, HATE_THRESHOLD};
use crate::evaluation::{classification_metrics, MetricsReport};
use crate::prompting::PromptCondition;
use crate::scoring::AttributePrediction;

#[derive(Debug, Error)]
pub enum ReconError {
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("row {row} has {got} features, expected {expected}")]
    Dimension { row: usize, expected: usize, got: usize },
    #[error("lambda must be finite and >= 0, got {0}")]
    BadLambda(f64),
    #[error("normal equations are singular (collinear features); use lambda > 0")]
    Singular,
    #[error("cannot split {n} rows into {k} folds")]
    Folds { n: usize, k: usize },
    #[error("target is constant, R² undefined")]
    ConstantTarget,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no training-fold Spearman ρ for {0}")]
    MissingRho(Attribute),
    #[error("non-finite value in input")]
    NonFinite,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// The ten weighted features of one comment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub comment_id: String,
    pub x: PerAttribute<f64>,
    pub imputed_mask: PerAttribute<bool>,
}

/// `x_i = S_i · C_i` for every scored prediction; attributes without one
/// take `impute_means[i]` and are flagged in the mask. Predictions from
/// other conditions are ignored.
pub fn build_features(
    comment_id: &str,
    predictions: &[&AttributePrediction],
    condition: PromptCondition,
    impute_means: &PerAttribute<f64>,
) -> FeatureVector {
    let mut x = *impute_means;
    let mut imputed_mask = [true; N_ATTRIBUTES];
    for p in predictions.iter().filter(|p| p.condition == condition && p.comment_id == comment_id) {
        if let Some((s, c)) = p.scored() {
            let i = p.attribute.index();
            x[i] = f64::from(s) * c;
            imputed_mask[i] = false;
        }
    }
    FeatureVector {
        comment_id: comment_id.to_string(),
        x,
        imputed_mask,
    }
}

/// Element-wise mean of per-annotator vectors. An attribute stays masked
/// only if every input was imputed.
pub fn aggregate_persona(vectors: &[FeatureVector]) -> Option<FeatureVector> {
    let first = vectors.first()?;
    let n = vectors.len() as f64;
    Some(FeatureVector {
        comment_id: first.comment_id.clone(),
        x: std::array::from_fn(|i| vectors.iter().map(|v| v.x[i]).sum::<f64>() / n),
        imputed_mask: std::array::from_fn(|i| vectors.iter().all(|v| v.imputed_mask[i])),
    })
}

/// Comment-level inputs to reconstruction, before imputation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommentFeatures {
    pub comment_id: String,
    /// Continuous hate score θ.
    pub target: f64,
    /// Mean label S over the comment's predictions.
    pub labels: PerAttribute<Option<f64>>,
    pub confidences: PerAttribute<Option<f64>>,
    /// Mean of S · C.
    pub weighted: PerAttribute<Option<f64>>,
    /// Mean human rating.
    pub human: PerAttribute<Option<f64>>,
}

/// Groups predictions of one condition by comment. Persona predictions are
/// averaged across annotators. Comments absent from the corpus are dropped.
pub fn collect_comment_features(
    predictions: &[AttributePrediction],
    corpus: &Corpus,
    condition: PromptCondition,
) -> Vec<CommentFeatures> {
    #[derive(Default)]
    struct Acc {
        s: [f64; N_ATTRIBUTES],
        c: [f64; N_ATTRIBUTES],
        x: [f64; N_ATTRIBUTES],
        n: [usize; N_ATTRIBUTES],
    }
    let mut by_comment: BTreeMap<&str, Acc> = BTreeMap::new();
    // Sorting first keeps floating-point sums independent of input order.
    let mut preds: Vec<&AttributePrediction> = predictions.iter().filter(|p| p.condition == condition).collect();
    preds.sort_by(|a, b| {
        compare_ids(&a.comment_id, &b.comment_id)
            .then(a.attribute.cmp(&b.attribute))
            .then_with(|| compare_ids(a.annotator_id.as_deref().unwrap_or(""), b.annotator_id.as_deref().unwrap_or("")))
    });
    for p in preds {
        let acc = by_comment.entry(&p.comment_id).or_default();
        if let Some((s, c)) = p.scored() {
            let i = p.attribute.index();
            acc.s[i] += f64::from(s);
            acc.c[i] += c;
            acc.x[i] += f64::from(s) * c;
            acc.n[i] += 1;
        }
    }
    let mut out: Vec<CommentFeatures> = by_comment
        .into_iter()
        .filter_map(|(id, acc)| {
            let comment = corpus.comment(id).ok()?;
            let avg = |v: &[f64; N_ATTRIBUTES]| -> PerAttribute<Option<f64>> {
                std::array::from_fn(|i| (acc.n[i] > 0).then(|| v[i] / acc.n[i] as f64))
            };
            Some(CommentFeatures {
                comment_id: id.to_string(),
                target: comment.hate_score,
                labels: avg(&acc.s),
                confidences: avg(&acc.c),
                weighted: avg(&acc.x),
                human: comment.mean_ratings(),
            })
        })
        .collect();
    out.sort_by(|a, b| compare_ids(&a.comment_id, &b.comment_id));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// `S · C`
    Weighted,
    /// `S` alone.
    Raw,
}

impl CommentFeatures {
    pub fn feature(&self, kind: FeatureKind) -> &PerAttribute<Option<f64>> {
        match kind {
            FeatureKind::Weighted => &self.weighted,
            FeatureKind::Raw => &self.labels,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Standardization {
    /// Center and divide by the training standard deviation.
    Full,
    /// Center only.
    CenterOnly,
}

/// A fitted ridge model. `weights` act on standardized features and
/// `intercept` is the training target mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub standardization: Standardization,
}

impl RidgeModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .weights
                .iter()
                .zip(x)
                .zip(self.means.iter().zip(&self.scales))
                .map(|((w, xi), (m, s))| w * (xi - m) / s)
                .sum::<f64>()
    }

    /// Weights on the original feature scale.
    pub fn raw_weights(&self) -> Vec<f64> {
        self.weights.iter().zip(&self.scales).map(|(w, s)| w / s).collect()
    }

    /// Intercept on the original feature scale.
    pub fn raw_intercept(&self) -> f64 {
        self.intercept - self.raw_weights().iter().zip(&self.means).map(|(w, m)| w * m).sum::<f64>()
    }
}

/// Closed-form ridge: solves `(ZᵀZ + λI) w = Zᵀ(y − ȳ)` on standardized `Z`.
pub fn ridge_fit(
    x: &[Vec<f64>],
    y: &[f64],
    lambda: f64,
    standardization: Standardization,
) -> Result<RidgeModel, ReconError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(ReconError::BadLambda(lambda));
    }
    if x.len() != y.len() {
        return Err(ReconError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(ReconError::TooFewRows { needed: 2, got: n });
    }
    let d = x[0].len();
    for (row, r) in x.iter().enumerate() {
        if r.len() != d {
            return Err(ReconError::Dimension { row, expected: d, got: r.len() });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(ReconError::NonFinite);
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(ReconError::NonFinite);
    }

    let nf = n as f64;
    let means: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / nf).collect();
    let scales: Vec<f64> = match standardization {
        Standardization::CenterOnly => vec![1.0; d],
        Standardization::Full => (0..d)
            .map(|j| {
                let var = x.iter().map(|r| (r[j] - means[j]).powi(2)).sum::<f64>() / nf;
                let sd = var.sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect(),
    };
    let y_mean = y.iter().sum::<f64>() / nf;

    let z = DMatrix::from_fn(n, d, |i, j| (x[i][j] - means[j]) / scales[j]);
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
    let mut gram = z.transpose() * &z;
    let scale_ref = (0..d).map(|j| gram[(j, j)]).fold(0.0f64, f64::max).max(1.0);
    for j in 0..d {
        gram[(j, j)] += lambda;
    }
    let rhs = z.transpose() * yc;
    let chol = gram.cholesky().ok_or(ReconError::Singular)?;
    let min_pivot = (0..d).map(|j| chol.l_dirty()[(j, j)].powi(2)).fold(f64::INFINITY, f64::min);
    if d > 0 && min_pivot < 1e-12 * scale_ref {
        return Err(ReconError::Singular);
    }
    let w = chol.solve(&rhs);

    Ok(RidgeModel {
        weights: w.iter().copied().collect(),
        intercept: y_mean,
        lambda,
        means,
        scales,
        standardization,
    })
}

pub fn ridge_predict(model: &RidgeModel, features: &FeatureVector) -> f64 {
    model.predict(&features.x)
}

/// `1 − SS_res / SS_tot`.
pub fn r_squared(y_true: &[f64], y_pred: &[f64]) -> Result<f64, ReconError> {
    if y_true.len() != y_pred.len() {
        return Err(ReconError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.len() < 2 {
        return Err(ReconError::TooFewRows { needed: 2, got: y_true.len() });
    }
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let ss_tot: f64 = y_true.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(ReconError::ConstantTarget);
    }
    let ss_res: f64 = y_true.iter().zip(y_pred).map(|(y, p)| (y - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

fn fold_hash(seed: u64, id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Fold index per id. Ids are ordered by a seeded hash and dealt round-robin,
/// so folds are balanced and independent of the input order.
pub fn fold_assignment(ids: &[&str], k: usize, seed: u64) -> Result<Vec<usize>, ReconError> {
    if k < 2 || ids.len() < k {
        return Err(ReconError::Folds { n: ids.len(), k });
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| {
        fold_hash(seed, ids[a])
            .cmp(&fold_hash(seed, ids[b]))
            .then_with(|| ids[a].cmp(ids[b]))
    });
    let mut folds = vec![0; ids.len()];
    for (pos, &i) in order.iter().enumerate() {
        folds[i] = pos % k;
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaSpec {
    Fixed(f64),
    /// Chosen per outer fold by inner cross-validation on the training rows.
    Grid(Vec<f64>),
}

impl LambdaSpec {
    pub fn default_grid() -> Self {
        LambdaSpec::Grid(vec![0.01, 0.1, 1.0, 10.0, 100.0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub k: usize,
    pub lambda: LambdaSpec,
    pub seed: u64,
    pub standardization: Standardization,
    /// Multiply each feature column by its training-fold Spearman ρ before
    /// the ridge fit.
    pub prescale_by_rho: bool,
    pub threshold: f64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            k: 5,
            lambda: LambdaSpec::Fixed(1.0),
            seed: 42,
            standardization: Standardization::Full,
            prescale_by_rho: false,
            threshold: HATE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OofPrediction {
    pub comment_id: String,
    pub fold: usize,
    pub target: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub lambda: Option<f64>,
    pub r2: f64,
    pub metrics: MetricsReport,
    /// Test-row features filled from training means.
    pub imputed_cells: usize,
    /// Raw-scale ridge weights, registry order (empty for non-ridge formulas).
    pub raw_weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub folds: Vec<FoldResult>,
    pub r2_mean: f64,
    /// Sample standard deviation across folds.
    pub r2_std: f64,
    /// Classification metrics averaged across folds, counts summed.
    pub metrics: MetricsReport,
    /// Pooled out-of-fold correlation with the target.
    pub pearson: f64,
    pub spearman: f64,
    pub oof: Vec<OofPrediction>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Per-attribute mean over the rows where the feature is present, 0 when none is.
fn training_means(rows: &[&CommentFeatures], pick: impl Fn(&CommentFeatures) -> PerAttribute<Option<f64>>) -> PerAttribute<f64> {
    let mut sum = [0.0; N_ATTRIBUTES];
    let mut n = [0usize; N_ATTRIBUTES];
    for r in rows {
        for (i, v) in pick(r).iter().enumerate() {
            if let Some(v) = v {
                sum[i] += v;
                n[i] += 1;
            }
        }
    }
    std::array::from_fn(|i| if n[i] > 0 { sum[i] / n[i] as f64 } else { 0.0 })
}

fn impute(values: &PerAttribute<Option<f64>>, means: &PerAttribute<f64>) -> (Vec<f64>, usize) {
    let mut missing = 0;
    let v = values
        .iter()
        .zip(means)
        .map(|(v, m)| {
            v.unwrap_or_else(|| {
                missing += 1;
                *m
            })
        })
        .collect();
    (v, missing)
}

/// Spearman ρ per attribute between model labels and human means on `rows`.
pub fn training_rho(rows: &[&CommentFeatures]) -> Result<PerAttribute<f64>, ReconError> {
    let mut rho = [0.0; N_ATTRIBUTES];
    for a in Attribute::ALL {
        let i = a.index();
        let (s, h): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter_map(|r| Some((r.labels[i]?, r.human[i]?)))
            .unzip();
        rho[i] = spearman_rho(&s, &h).map_err(|_| ReconError::MissingRho(a))?;
    }
    Ok(rho)
}

fn split<'a>(rows: &'a [CommentFeatures], folds: &[usize], f: usize) -> (Vec<&'a CommentFeatures>, Vec<&'a CommentFeatures>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (r, &g) in rows.iter().zip(folds) {
        if g == f {
            test.push(r);
        } else {
            train.push(r);
        }
    }
    (train, test)
}

/// Prepares design matrices for one split: imputation and optional ρ
/// prescaling, both from the training rows.
fn design(
    train: &[&CommentFeatures],
    test: &[&CommentFeatures],
    kind: FeatureKind,
    prescale: bool,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>, usize), ReconError> {
    let means = training_means(train, |r| *r.feature(kind));
    let factors: PerAttribute<f64> = if prescale { training_rho(train)? } else { [1.0; N_ATTRIBUTES] };
    let scale = |mut v: Vec<f64>| {
        for (x, f) in v.iter_mut().zip(&factors) {
            *x *= f;
        }
        v
    };
    let xtr = train.iter().map(|r| scale(impute(r.feature(kind), &means).0)).collect();
    let mut imputed = 0;
    let xte = test
        .iter()
        .map(|r| {
            let (v, m) = impute(r.feature(kind), &means);
            imputed += m;
            scale(v)
        })
        .collect();
    Ok((xtr, xte, imputed))
}

fn select_lambda(
    train: &[&CommentFeatures],
    kind: FeatureKind,
    config: &CvConfig,
) -> Result<f64, ReconError> {
    let grid = match &config.lambda {
        LambdaSpec::Fixed(l) => return Ok(*l),
        LambdaSpec::Grid(g) => g,
    };
    let owned: Vec<CommentFeatures> = train.iter().map(|r| (*r).clone()).collect();
    let ids: Vec<&str> = owned.iter().map(|r| r.comment_id.as_str()).collect();
    let inner_k = config.k.min(owned.len());
    let folds = fold_assignment(&ids, inner_k, config.seed.wrapping_add(1))?;
    let mut best = (f64::NEG_INFINITY, grid.first().copied().unwrap_or(1.0));
    for &lambda in grid {
        let mut scores = Vec::new();
        for f in 0..inner_k {
            let (tr, te) = split(&owned, &folds, f);
            let (xtr, xte, _) = design(&tr, &te, kind, config.prescale_by_rho)?;
            let ytr: Vec<f64> = tr.iter().map(|r| r.target).collect();
            let yte: Vec<f64> = te.iter().map(|r| r.target).collect();
            let model = ridge_fit(&xtr, &ytr, lambda, config.standardization)?;
            let pred: Vec<f64> = xte.iter().map(|x| model.predict(x)).collect();
            scores.push(r_squared(&yte, &pred).unwrap_or(f64::NEG_INFINITY));
        }
        let (m, _) = mean_std(&scores);
        if m > best.0 {
            best = (m, lambda);
        }
    }
    Ok(best.1)
}

/// Which score a fold produces.
#[derive(Debug, Clone, Copy)]
enum Scorer {
    Ridge(FeatureKind),
    RhoSum(FeatureKind),
}

fn run_cv(rows: &[CommentFeatures], scorer: Scorer, config: &CvConfig) -> Result<CvResult, ReconError> {
    let ids: Vec<&str> = rows.iter().map(|r| r.comment_id.as_str()).collect();
    let folds = fold_assignment(&ids, config.k, config.seed)?;
    let mut fold_results = Vec::with_capacity(config.k);
    let mut oof = Vec::with_capacity(rows.len());
    for f in 0..config.k {
        let (train, test) = split(rows, &folds, f);
        let yte: Vec<f64> = test.iter().map(|r| r.target).collect();
        let (pred, lambda, raw_weights, imputed) = match scorer {
            Scorer::Ridge(kind) => {
                let lambda = select_lambda(&train, kind, config)?;
                let (xtr, xte, imputed) = design(&train, &test, kind, config.prescale_by_rho)?;
                let ytr: Vec<f64> = train.iter().map(|r| r.target).collect();
                let model = ridge_fit(&xtr, &ytr, lambda, config.standardization)?;
                let pred: Vec<f64> = xte.iter().map(|x| model.predict(x)).collect();
                (pred, Some(lambda), model.raw_weights(), imputed)
            }
            Scorer::RhoSum(kind) => {
                let rho = training_rho(&train)?;
                let (_, xte, imputed) = design(&train, &test, kind, false)?;
                let pred = xte.iter().map(|x| weighted_sum(x, &rho)).collect();
                (pred, None, Vec::new(), imputed)
            }
        };
        let r2 = r_squared(&yte, &pred)?;
        let truth: Vec<bool> = yte.iter().map(|y| *y > config.threshold).collect();
        let predicted: Vec<bool> = pred.iter().map(|p| *p > config.threshold).collect();
        let metrics = classification_metrics(&predicted, &truth).map_err(|_| ReconError::TooFewRows { needed: 1, got: 0 })?;
        for (r, p) in test.iter().zip(&pred) {
            oof.push(OofPrediction {
                comment_id: r.comment_id.clone(),
                fold: f,
                target: r.target,
                predicted: *p,
            });
        }
        fold_results.push(FoldResult {
            fold: f,
            n_train: train.len(),
            n_test: test.len(),
            lambda,
            r2,
            metrics,
            imputed_cells: imputed,
            raw_weights,
        });
    }
    oof.sort_by(|a, b| compare_ids(&a.comment_id, &b.comment_id));
    let r2s: Vec<f64> = fold_results.iter().map(|f| f.r2).collect();
    let (r2_mean, r2_std) = mean_std(&r2s);
    let targets: Vec<f64> = oof.iter().map(|o| o.target).collect();
    let preds: Vec<f64> = oof.iter().map(|o| o.predicted).collect();
    let metrics = MetricsReport::average(fold_results.iter().map(|f| &f.metrics));
    Ok(CvResult {
        r2_mean,
        r2_std,
        metrics,
        pearson: pearson_r(&targets, &preds).unwrap_or(f64::NAN),
        spearman: spearman_rho(&targets, &preds).unwrap_or(f64::NAN),
        folds: fold_results,
        oof,
    })
}

/// k-fold cross-validated ridge reconstruction of the hate score.
pub fn kfold_cv(rows: &[CommentFeatures], kind: FeatureKind, config: &CvConfig) -> Result<CvResult, ReconError> {
    if let LambdaSpec::Fixed(l) = config.lambda {
        if !(l >= 0.0 && l.is_finite()) {
            return Err(ReconError::BadLambda(l));
        }
    }
    run_cv(rows, Scorer::Ridge(kind), config)
}

/// Ridge fitted on every row, for weight inspection.
pub fn fit_all(rows: &[CommentFeatures], kind: FeatureKind, lambda: f64, standardization: Standardization) -> Result<RidgeModel, ReconError> {
    let all: Vec<&CommentFeatures> = rows.iter().collect();
    let (x, _, _) = design(&all, &[], kind, false)?;
    let y: Vec<f64> = rows.iter().map(|r| r.target).collect();
    ridge_fit(&x, &y, lambda, standardization)
}

pub fn write_weights_csv<W: Write>(writer: W, model: &RidgeModel) -> Result<(), ReconError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["attribute", "weight", "standardized_weight"])?;
    for (a, (raw, std)) in Attribute::ALL.iter().zip(model.raw_weights().iter().zip(&model.weights)) {
        w.write_record([a.name().to_string(), raw.to_string(), std.to_string()])?;
    }
    w.write_record(["intercept".to_string(), model.raw_intercept().to_string(), model.intercept.to_string()])?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AblationFormula {
    /// `Σ ρ_i · C_i · S_i`, no ridge.
    A,
    /// Ridge on `S · C`.
    B,
    /// Ridge on `S`.
    C,
    /// `Σ ρ_i · S_i`, no ridge.
    D,
}

impl AblationFormula {
    pub const ALL: [AblationFormula; 4] = [AblationFormula::A, AblationFormula::B, AblationFormula::C, AblationFormula::D];

    pub fn describe(self) -> &'static str {
        match self {
            AblationFormula::A => "no ridge, confidence and Spearman weighted sum",
            AblationFormula::B => "ridge on confidence-weighted labels",
            AblationFormula::C => "ridge on raw labels",
            AblationFormula::D => "no ridge, Spearman weighted sum",
        }
    }
}

impl std::fmt::Display for AblationFormula {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

impl std::str::FromStr for AblationFormula {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(AblationFormula::A),
            "B" => Ok(AblationFormula::B),
            "C" => Ok(AblationFormula::C),
            "D" => Ok(AblationFormula::D),
            other => Err(format!("unknown ablation formula `{other}`")),
        }
    }
}

/// `Σ ρ_i · v_i`.
pub fn weighted_sum(values: &[f64], rho: &[f64]) -> f64 {
    values.iter().zip(rho).map(|(v, r)| v * r).sum()
}

/// Formula A applied to one comment's labels and confidences.
pub fn formula_a(labels: &[f64], confidences: &[f64], rho: &[f64]) -> f64 {
    labels.iter().zip(confidences).zip(rho).map(|((s, c), r)| r * c * s).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub formula: AblationFormula,
    pub cv: CvResult,
}

pub fn ablation_score(formula: AblationFormula, rows: &[CommentFeatures], config: &CvConfig) -> Result<AblationResult, ReconError> {
    let scorer = match formula {
        AblationFormula::A => Scorer::RhoSum(FeatureKind::Weighted),
        AblationFormula::B => Scorer::Ridge(FeatureKind::Weighted),
        AblationFormula::C => Scorer::Ridge(FeatureKind::Raw),
        AblationFormula::D => Scorer::RhoSum(FeatureKind::Raw),
    };
    Ok(AblationResult {
        formula,
        cv: run_cv(rows, scorer, config)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::PredictionStatus;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn col(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|x| vec![*x]).collect()
    }

    #[test]
    fn exact_line_ols() {
        let m = ridge_fit(&col(&[1.0, 2.0, 3.0, 5.0]), &[2.0, 4.0, 6.0, 10.0], 0.0, Standardization::Full).unwrap();
        assert!((m.raw_weights()[0] - 2.0).abs() < 1e-12);
        assert!(m.raw_intercept().abs() < 1e-12);
        assert!((m.predict(&[4.0]) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn centered_lambda_one_example() {
        let m = ridge_fit(&col(&[1.0, 2.0, 3.0]), &[1.0, 2.0, 3.0], 1.0, Standardization::CenterOnly).unwrap();
        assert!((m.raw_weights()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.raw_intercept() - 2.0 / 3.0).abs() < 1e-15);
        let preds: Vec<f64> = [1.0, 2.0, 3.0].iter().map(|x| m.predict(&[*x])).collect();
        for (p, e) in preds.iter().zip([4.0 / 3.0, 2.0, 8.0 / 3.0]) {
            assert!((p - e).abs() < 1e-15);
        }
        assert!((m.predict(&[2.0]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn heavy_shrinkage_predicts_mean() {
        let m = ridge_fit(&col(&[1.0, 2.0, 3.0]), &[1.0, 5.0, 3.0], 1e12, Standardization::Full).unwrap();
        assert!(m.weights[0].abs() < 1e-9);
        assert!((m.predict(&[10.0]) - 3.0).abs() < 1e-9);
        assert!((m.predict(&m.means.clone()) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn collinear_without_lambda_is_singular() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(matches!(ridge_fit(&x, &y, 0.0, Standardization::Full), Err(ReconError::Singular)));
        assert!(ridge_fit(&x, &y, 0.1, Standardization::Full).is_ok());
        assert!(matches!(ridge_fit(&x, &y, -1.0, Standardization::Full), Err(ReconError::BadLambda(_))));
    }

    #[test]
    fn monotone_shrinkage() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<Vec<f64>> = (0..40).map(|_| (0..4).map(|_| rng.random::<f64>()).collect()).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] - 2.0 * r[1] + 0.1 * rng.random::<f64>()).collect();
        let norms: Vec<f64> = [0.0, 0.01, 0.1, 1.0, 10.0, 100.0]
            .iter()
            .map(|l| {
                let m = ridge_fit(&x, &y, *l, Standardization::Full).unwrap();
                m.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
            })
            .collect();
        for w in norms.windows(2) {
            assert!(w[1] < w[0], "{norms:?}");
        }
    }

    #[test]
    fn r_squared_examples() {
        assert_eq!(r_squared(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(r_squared(&[0.0, 1.0, 2.0], &[1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(r_squared(&[0.0, 1.0, 2.0], &[0.0, 1.0, 1.0]).unwrap(), 0.5);
        assert!(matches!(r_squared(&[1.0, 1.0], &[1.0, 1.0]), Err(ReconError::ConstantTarget)));
    }

    #[test]
    fn ablation_arithmetic() {
        assert_eq!(weighted_sum(&[4.0, 4.0], &[1.0, -1.0]), 0.0);
        assert_eq!(formula_a(&[4.0, 4.0], &[0.5, 1.0], &[1.0, -1.0]), -2.0);
        assert_eq!("b".parse::<AblationFormula>().unwrap(), AblationFormula::B);
    }

    fn pred(attribute: Attribute, annotator: Option<&str>, label: Option<u8>, conf: f64) -> AttributePrediction {
        AttributePrediction {
            comment_id: "c".into(),
            annotator_id: annotator.map(str::to_string),
            attribute,
            condition: PromptCondition::Vanilla,
            label,
            confidence: label.map(|_| conf),
            raw_logprobs: BTreeMap::new(),
            status: if label.is_some() { PredictionStatus::Ok } else { PredictionStatus::Missing },
        }
    }

    #[test]
    fn feature_construction() {
        let mut means = [0.0; N_ATTRIBUTES];
        means[Attribute::Genocide.index()] = 0.41;
        let a = pred(Attribute::Insult, None, Some(3), 0.9);
        let b = pred(Attribute::Violence, None, Some(0), 0.7);
        let c = pred(Attribute::Genocide, None, None, 0.0);
        let f = build_features("c", &[&a, &b, &c], PromptCondition::Vanilla, &means);
        assert!((f.x[Attribute::Insult.index()] - 2.7).abs() < 1e-15);
        assert_eq!(f.x[Attribute::Violence.index()], 0.0);
        assert_eq!(f.x[Attribute::Genocide.index()], 0.41);
        assert!(f.imputed_mask[Attribute::Genocide.index()]);
        assert!(!f.imputed_mask[Attribute::Insult.index()]);
    }

    #[test]
    fn persona_aggregation() {
        let v = |x: f64| {
            let mut fv = FeatureVector { comment_id: "c".into(), x: [0.0; N_ATTRIBUTES], imputed_mask: [false; N_ATTRIBUTES] };
            fv.x[Attribute::Insult.index()] = x;
            fv
        };
        let i = Attribute::Insult.index();
        assert_eq!(aggregate_persona(&[v(2.0), v(3.0)]).unwrap().x[i], 2.5);
        assert_eq!(aggregate_persona(&[v(1.7)]).unwrap(), v(1.7));
        assert_eq!(aggregate_persona(&[v(0.0), v(0.0), v(3.0)]).unwrap().x[i], 1.0);
        assert!(aggregate_persona(&[]).is_none());
    }

    #[test]
    fn folds_are_balanced_and_order_free() {
        let ids: Vec<String> = (0..103).map(|i| format!("c{i}")).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let f = fold_assignment(&refs, 5, 42).unwrap();
        let mut counts = [0; 5];
        for g in &f {
            counts[*g] += 1;
        }
        assert!(counts.iter().all(|c| *c == 20 || *c == 21), "{counts:?}");
        let mut rev = refs.clone();
        rev.reverse();
        let g = fold_assignment(&rev, 5, 42).unwrap();
        for (i, id) in rev.iter().enumerate() {
            let j = refs.iter().position(|r| r == id).unwrap();
            assert_eq!(g[i], f[j]);
        }
        assert_ne!(f, fold_assignment(&refs, 5, 7).unwrap());
        assert!(fold_assignment(&refs[..3], 5, 1).is_err());
    }

    fn perfect_rows(n: usize) -> Vec<CommentFeatures> {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        (0..n)
            .map(|i| {
                let labels: PerAttribute<Option<f64>> = std::array::from_fn(|_| Some(f64::from(rng.random_range(0u8..5))));
                let target = labels.iter().enumerate().map(|(j, v)| v.unwrap() * (j as f64 - 4.5)).sum();
                CommentFeatures {
                    comment_id: i.to_string(),
                    target,
                    labels,
                    confidences: [Some(1.0); N_ATTRIBUTES],
                    weighted: labels,
                    human: labels,
                }
            })
            .collect()
    }

    #[test]
    fn exact_targets_give_unit_r2() {
        let rows = perfect_rows(60);
        let cfg = CvConfig { lambda: LambdaSpec::Fixed(0.0), ..Default::default() };
        let cv = kfold_cv(&rows, FeatureKind::Weighted, &cfg).unwrap();
        for f in &cv.folds {
            assert!((f.r2 - 1.0).abs() < 1e-12);
        }
        assert_eq!(cv.oof.len(), 60);
        let grid = CvConfig { lambda: LambdaSpec::default_grid(), ..Default::default() };
        let cv = kfold_cv(&rows, FeatureKind::Weighted, &grid).unwrap();
        assert!(cv.folds.iter().all(|f| f.lambda == Some(0.01)));
    }

    #[test]
    fn too_few_rows_for_folds() {
        let rows = perfect_rows(3);
        assert!(matches!(kfold_cv(&rows, FeatureKind::Weighted, &CvConfig::default()), Err(ReconError::Folds { .. })));
    }

    /// Gaussian elimination with partial pivoting.
    fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, p);
            b.swap(c, p);
            for r in c + 1..n {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
            x[r] = (b[r] - s) / a[r][r];
        }
        x
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn matches_dense_oracle(seed in 0u64..10_000, lambda in prop::sample::select(vec![0.01, 1.0, 100.0])) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (n, d) = (30, 4);
            let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let m = ridge_fit(&x, &y, lambda, Standardization::CenterOnly).unwrap();
            let mx: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
            let my = y.iter().sum::<f64>() / n as f64;
            let a: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| {
                x.iter().map(|r| (r[i] - mx[i]) * (r[j] - mx[j])).sum::<f64>() + if i == j { lambda } else { 0.0 }
            }).collect()).collect();
            let b: Vec<f64> = (0..d).map(|i| x.iter().zip(&y).map(|(r, yy)| (r[i] - mx[i]) * (yy - my)).sum()).collect();
            let w = solve_dense(a, b);
            for (got, want) in m.weights.iter().zip(&w) {
                prop_assert!((got - want).abs() <= 1e-8 * want.abs().max(1e-8));
            }
        }
    }
}
