//! Binary classification metrics, direct-prompting baselines and the text
//! report.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::{render_alignment, AlignmentTable};
use crate::corpus::{binary_ground_truth, Corpus, HATE_THRESHOLD};
use crate::inference::InferenceClient;
use crate::prompting::{BaselineVariant, FewShotExample, PromptError, PromptTemplates};
use crate::reconstruction::{AblationResult, CvResult};
use crate::scoring::predict_binary;
use crate::table::{format_2dp, format_x100, render};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {0} predictions vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("no examples to score")]
    Empty,
    #[error("prompt: {0}")]
    Prompt(#[from] PromptError),
    #[error("baseline {variant}: no parseable answers out of {total}")]
    NoAnswers { variant: BaselineVariant, total: usize },
    #[error("report has no sections")]
    EmptyReport,
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// `score > threshold`.
pub fn classify(score: f64, threshold: f64) -> bool {
    score > threshold
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub r2: Option<MeanStd>,
    /// Positive-class F1.
    pub f1: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    /// Mean of the per-class F1 scores.
    pub macro_f1: f64,
    pub counts: Confusion,
    /// Set when some ratio had a zero denominator and was reported as 0.
    pub zero_denominator: bool,
    /// Path or id of the run manifest that produced these numbers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
}

fn ratio(num: usize, den: usize, flag: &mut bool) -> f64 {
    if den == 0 {
        *flag = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1_of(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

impl MetricsReport {
    pub fn from_counts(counts: Confusion) -> Self {
        let mut zero = false;
        let precision = ratio(counts.tp, counts.tp + counts.fp, &mut zero);
        let recall = ratio(counts.tp, counts.tp + counts.fn_, &mut zero);
        let accuracy = ratio(counts.tp + counts.tn, counts.total(), &mut zero);
        let mut neg_zero = false;
        let neg_p = ratio(counts.tn, counts.tn + counts.fn_, &mut neg_zero);
        let neg_r = ratio(counts.tn, counts.tn + counts.fp, &mut neg_zero);
        let f1 = f1_of(precision, recall);
        MetricsReport {
            r2: None,
            f1,
            accuracy,
            precision,
            recall,
            macro_f1: (f1 + f1_of(neg_p, neg_r)) / 2.0,
            counts,
            zero_denominator: zero,
            manifest: None,
        }
    }

    /// Mean of each ratio across reports, with counts summed.
    pub fn average<'a>(reports: impl IntoIterator<Item = &'a MetricsReport>) -> MetricsReport {
        let reports: Vec<&MetricsReport> = reports.into_iter().collect();
        let n = reports.len().max(1) as f64;
        let mean = |f: fn(&MetricsReport) -> f64| reports.iter().map(|r| f(r)).sum::<f64>() / n;
        let mut counts = Confusion::default();
        for r in &reports {
            counts.tp += r.counts.tp;
            counts.fp += r.counts.fp;
            counts.fn_ += r.counts.fn_;
            counts.tn += r.counts.tn;
        }
        MetricsReport {
            r2: None,
            f1: mean(|r| r.f1),
            accuracy: mean(|r| r.accuracy),
            precision: mean(|r| r.precision),
            recall: mean(|r| r.recall),
            macro_f1: mean(|r| r.macro_f1),
            counts,
            zero_denominator: reports.iter().any(|r| r.zero_denominator),
            manifest: None,
        }
    }
}

pub fn classification_metrics(pred: &[bool], truth: &[bool]) -> Result<MetricsReport, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut c = Confusion::default();
    for (p, t) in pred.iter().zip(truth) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(MetricsReport::from_counts(c))
}

/// Cross-validated reconstruction metrics with R² attached.
pub fn reconstruction_metrics(cv: &CvResult) -> MetricsReport {
    MetricsReport {
        r2: Some(MeanStd { mean: cv.r2_mean, std: cv.r2_std }),
        ..cv.metrics.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub variant: BaselineVariant,
    pub metrics: MetricsReport,
    /// Answers that matched neither token even after the logprob fallback.
    pub unparsed: usize,
    /// Requests that failed outright.
    pub failed: usize,
}

/// `n` lowest- and `n` highest-scoring comments as labelled examples.
pub fn few_shot_from_corpus(corpus: &Corpus, n: usize) -> Vec<FewShotExample> {
    let mut sorted: Vec<_> = corpus.comments().iter().collect();
    sorted.sort_by(|a, b| a.hate_score.total_cmp(&b.hate_score));
    let n = n.min(sorted.len() / 2);
    let mut out = Vec::with_capacity(2 * n);
    for (low, high) in sorted[..n].iter().zip(sorted[sorted.len() - n..].iter().rev()) {
        out.push(FewShotExample { text: high.text.clone(), hate: high.hate_score > HATE_THRESHOLD });
        out.push(FewShotExample { text: low.text.clone(), hate: low.hate_score > HATE_THRESHOLD });
    }
    out
}

/// Prompts every comment with one direct-classification variant and scores
/// the parsed answers against the thresholded hate score.
pub fn baseline_eval(
    variant: BaselineVariant,
    corpus: &Corpus,
    templates: &PromptTemplates,
    client: &InferenceClient,
    parallelism: usize,
) -> Result<BaselineResult, EvalError> {
    let prompts = corpus
        .comments()
        .iter()
        .map(|c| templates.build_baseline_prompt(variant, c))
        .collect::<Result<Vec<_>, _>>()?;
    let responses = client.batch_annotate(&prompts, parallelism);
    let (mut pred, mut truth) = (Vec::new(), Vec::new());
    let (mut unparsed, mut failed) = (0, 0);
    for (comment, response) in corpus.comments().iter().zip(responses) {
        let response = match response {
            Ok(r) => r,
            Err(e) => {
                log::warn!("baseline {variant}, comment {}: {e}", comment.comment_id);
                failed += 1;
                continue;
            }
        };
        let answer = predict_binary(&response, &templates.baseline.non_hate_token, &templates.baseline.hate_token);
        match answer.hate {
            Some(h) => {
                pred.push(h);
                truth.push(binary_ground_truth(comment.hate_score).unwrap_or(false));
            }
            None => unparsed += 1,
        }
    }
    if pred.is_empty() {
        return Err(EvalError::NoAnswers { variant, total: prompts.len() });
    }
    if unparsed + failed > 0 {
        log::warn!("baseline {variant}: {unparsed} unparseable, {failed} failed");
    }
    Ok(BaselineResult {
        variant,
        metrics: classification_metrics(&pred, &truth)?,
        unparsed,
        failed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelledAlignment {
    pub label: String,
    pub table: AlignmentTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelledMetrics {
    pub label: String,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub formula: String,
    pub r2: f64,
    pub pearson: f64,
    pub spearman: f64,
}

impl From<&AblationResult> for AblationRow {
    fn from(a: &AblationResult) -> Self {
        AblationRow {
            formula: a.formula.to_string(),
            r2: a.cv.r2_mean,
            pearson: a.cv.pearson,
            spearman: a.cv.spearman,
        }
    }
}

/// Everything a report can show. Empty sections are omitted when rendering.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    #[serde(default)]
    pub alignment: Vec<LabelledAlignment>,
    #[serde(default)]
    pub reconstruction: Vec<LabelledMetrics>,
    #[serde(default)]
    pub ablation: Vec<AblationRow>,
    #[serde(default)]
    pub baselines: Vec<BaselineResult>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RenderOptions {
    /// Show macro F1 in the F1 column.
    pub macro_f1: bool,
}

impl Report {
    pub fn n_sections(&self) -> usize {
        [!self.alignment.is_empty(), !self.reconstruction.is_empty(), !self.ablation.is_empty(), !self.baselines.is_empty()]
            .iter()
            .filter(|b| **b)
            .count()
    }

    pub fn to_json<W: Write>(&self, writer: W) -> Result<(), EvalError> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }

    pub fn from_json<R: Read>(reader: R) -> Result<Self, EvalError> {
        Ok(serde_json::from_reader(reader)?)
    }
}

fn metrics_row(label: &str, m: &MetricsReport, opts: RenderOptions) -> Vec<String> {
    let r2 = m
        .r2
        .map_or("--".to_string(), |r| format!("{} ± {}", format_x100(r.mean), format_x100(r.std)));
    vec![
        label.to_string(),
        r2,
        format_x100(if opts.macro_f1 { m.macro_f1 } else { m.f1 }),
        format_x100(m.accuracy),
        format_x100(m.precision),
        format_x100(m.recall),
    ]
}

fn metrics_header(opts: RenderOptions) -> Vec<String> {
    let f1 = if opts.macro_f1 { "Macro F1" } else { "F1" };
    ["", "R²", f1, "Acc.", "Prec.", "Recall"].iter().map(|s| s.to_string()).collect()
}

/// Plain-text report. Scores are ×100; ablation correlations use two decimals.
pub fn render_report(report: &Report, opts: RenderOptions) -> Result<String, EvalError> {
    if report.n_sections() == 0 {
        return Err(EvalError::EmptyReport);
    }
    let mut sections = Vec::new();
    if !report.alignment.is_empty() {
        let tables: Vec<(String, &AlignmentTable)> = report.alignment.iter().map(|a| (a.label.clone(), &a.table)).collect();
        sections.push(format!("Spearman correlation with human ratings (x100)\n\n{}", render_alignment(&tables)));
    }
    if !report.baselines.is_empty() {
        let rows: Vec<Vec<String>> = report
            .baselines
            .iter()
            .map(|b| metrics_row(b.variant.display_name(), &b.metrics, opts))
            .collect();
        sections.push(format!("Direct prompting baselines (x100)\n\n{}", render(&metrics_header(opts), &rows)));
    }
    if !report.reconstruction.is_empty() {
        let rows: Vec<Vec<String>> = report
            .reconstruction
            .iter()
            .map(|r| metrics_row(&r.label, &r.metrics, opts))
            .collect();
        sections.push(format!("Score reconstruction and classification (x100)\n\n{}", render(&metrics_header(opts), &rows)));
    }
    if !report.ablation.is_empty() {
        let header: Vec<String> = ["Formula", "R²", "Pearson", "Spearman"].iter().map(|s| s.to_string()).collect();
        let rows: Vec<Vec<String>> = report
            .ablation
            .iter()
            .map(|a| vec![a.formula.clone(), format_x100(a.r2), format_2dp(a.pearson), format_2dp(a.spearman)])
            .collect();
        sections.push(format!("Formula ablation (R² x100)\n\n{}", render(&header, &rows)));
    }
    Ok(sections.join("\n"))
}
