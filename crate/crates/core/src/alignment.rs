//! Per-attribute agreement between model labels and human ratings.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attribute::Attribute;
use crate::corpus::{compare_ids, Corpus};
use crate::prompting::PromptCondition;
use crate::scoring::AttributePrediction;
use crate::table;

#[derive(Debug, Error)]
pub enum AlignmentError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 pairs, got {0}")]
    TooShort(usize),
    #[error("constant input, correlation undefined")]
    Degenerate,
    #[error("no usable predictions for condition {0}")]
    NoPredictions(PromptCondition),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// 1-based ranks with ties replaced by their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // Positions i..j (0-based) share rank (i+1 + j) / 2.
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

pub fn pearson_r(a: &[f64], b: &[f64]) -> Result<f64, AlignmentError> {
    if a.len() != b.len() {
        return Err(AlignmentError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(AlignmentError::TooShort(n));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(AlignmentError::Degenerate);
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson correlation of the average-ranked inputs.
pub fn spearman_rho(a: &[f64], b: &[f64]) -> Result<f64, AlignmentError> {
    if a.len() != b.len() {
        return Err(AlignmentError::LengthMismatch(a.len(), b.len()));
    }
    pearson_r(&average_ranks(a), &average_ranks(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// Each prediction against individual annotators' ratings.
    PerAnnotator,
    /// Comment-level prediction against the mean human rating.
    CommentMean,
}

impl Granularity {
    /// Per-annotator for persona runs, comment means otherwise.
    pub fn default_for(condition: PromptCondition) -> Self {
        match condition {
            PromptCondition::Persona => Granularity::PerAnnotator,
            _ => Granularity::CommentMean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentStats {
    pub attribute: Attribute,
    pub condition: PromptCondition,
    pub rho: f64,
    pub pearson: Option<f64>,
    pub n_pairs: usize,
    pub mean_confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedAttribute {
    pub attribute: Attribute,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentTable {
    pub condition: PromptCondition,
    pub granularity: Granularity,
    /// Most negative ρ first.
    pub rows: Vec<AlignmentStats>,
    pub skipped: Vec<SkippedAttribute>,
}

impl AlignmentTable {
    pub fn get(&self, attribute: Attribute) -> Option<&AlignmentStats> {
        self.rows.iter().find(|r| r.attribute == attribute)
    }
}

type Key<'a> = (&'a str, &'a str);

fn sort_key<'a>(a: &Key<'a>, b: &Key<'a>) -> std::cmp::Ordering {
    compare_ids(a.0, b.0).then_with(|| compare_ids(a.1, b.1))
}

pub fn alignment_table(
    predictions: &[AttributePrediction],
    corpus: &Corpus,
    condition: PromptCondition,
    granularity: Granularity,
) -> Result<AlignmentTable, AlignmentError> {
    // (attribute) -> list of (sort key, model value, human value, confidence)
    let mut pairs: BTreeMap<Attribute, Vec<(Key<'_>, f64, f64)>> = BTreeMap::new();
    let mut confidences: BTreeMap<Attribute, Vec<(Key<'_>, f64)>> = BTreeMap::new();
    let mut any = false;

    match granularity {
        Granularity::PerAnnotator => {
            for p in predictions.iter().filter(|p| p.condition == condition) {
                let Some((label, conf)) = p.scored() else { continue };
                let Ok(comment) = corpus.comment(&p.comment_id) else { continue };
                any = true;
                let i = p.attribute.index();
                let key_annot = p.annotator_id.as_deref().unwrap_or("");
                confidences.entry(p.attribute).or_default().push(((&p.comment_id, key_annot), conf));
                match &p.annotator_id {
                    Some(annotator) => {
                        if let Some(h) = comment.ratings.get(annotator).and_then(|r| r[i]) {
                            pairs.entry(p.attribute).or_default().push((
                                (&p.comment_id, annotator),
                                f64::from(label),
                                f64::from(h),
                            ));
                        }
                    }
                    None => {
                        for (annotator, values) in &comment.ratings {
                            if let Some(h) = values[i] {
                                pairs.entry(p.attribute).or_default().push((
                                    (&p.comment_id, annotator),
                                    f64::from(label),
                                    f64::from(h),
                                ));
                            }
                        }
                    }
                }
            }
        }
        Granularity::CommentMean => {
            let mut grouped: BTreeMap<(Attribute, &str), Vec<(&str, f64, f64)>> = BTreeMap::new();
            for p in predictions.iter().filter(|p| p.condition == condition) {
                let Some((label, conf)) = p.scored() else { continue };
                any = true;
                grouped.entry((p.attribute, &p.comment_id)).or_default().push((
                    p.annotator_id.as_deref().unwrap_or(""),
                    f64::from(label),
                    conf,
                ));
            }
            for ((attribute, comment_id), mut preds) in grouped {
                let Ok(comment) = corpus.comment(comment_id) else { continue };
                preds.sort_by(|a, b| compare_ids(a.0, b.0));
                for (annotator, _, conf) in &preds {
                    confidences.entry(attribute).or_default().push(((comment_id, annotator), *conf));
                }
                let Some(h) = comment.mean_ratings()[attribute.index()] else { continue };
                let s = preds.iter().map(|p| p.1).sum::<f64>() / preds.len() as f64;
                pairs.entry(attribute).or_default().push(((comment_id, ""), s, h));
            }
        }
    }
    if !any {
        return Err(AlignmentError::NoPredictions(condition));
    }

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for attribute in Attribute::ALL {
        let mut attr_pairs = pairs.remove(&attribute).unwrap_or_default();
        attr_pairs.sort_by(|a, b| sort_key(&a.0, &b.0));
        let model: Vec<f64> = attr_pairs.iter().map(|p| p.1).collect();
        let human: Vec<f64> = attr_pairs.iter().map(|p| p.2).collect();
        match spearman_rho(&model, &human) {
            Ok(rho) => {
                let mut confs = confidences.remove(&attribute).unwrap_or_default();
                confs.sort_by(|a, b| sort_key(&a.0, &b.0).then(a.1.total_cmp(&b.1)));
                let mean_confidence = confs.iter().map(|c| c.1).sum::<f64>() / confs.len().max(1) as f64;
                rows.push(AlignmentStats {
                    attribute,
                    condition,
                    rho,
                    pearson: pearson_r(&model, &human).ok(),
                    n_pairs: model.len(),
                    mean_confidence,
                });
            }
            Err(e) => {
                let reason = if model.is_empty() { "no usable pairs".to_string() } else { e.to_string() };
                log::warn!("alignment: skipping {attribute}: {reason}");
                skipped.push(SkippedAttribute { attribute, reason });
            }
        }
    }
    rows.sort_by(|a, b| a.rho.total_cmp(&b.rho).then(a.attribute.cmp(&b.attribute)));
    Ok(AlignmentTable {
        condition,
        granularity,
        rows,
        skipped,
    })
}

/// One row of the confidence-versus-correlation export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRow {
    pub attribute: Attribute,
    pub condition: PromptCondition,
    pub mean_confidence: f64,
    pub rho: f64,
}

pub fn confidence_correlation_rows<'a>(tables: impl IntoIterator<Item = &'a AlignmentTable>) -> Vec<ConfidenceRow> {
    tables
        .into_iter()
        .flat_map(|t| {
            t.rows.iter().map(|r| ConfidenceRow {
                attribute: r.attribute,
                condition: r.condition,
                mean_confidence: r.mean_confidence,
                rho: r.rho,
            })
        })
        .collect()
}

pub fn write_confidence_csv<W: Write>(writer: W, rows: &[ConfidenceRow]) -> Result<(), AlignmentError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_confidence_csv<R: Read>(reader: R) -> Result<Vec<ConfidenceRow>, AlignmentError> {
    let mut r = csv::Reader::from_reader(reader);
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// Full per-attribute statistics as a CSV table.
pub fn write_alignment_csv<W: Write>(writer: W, table: &AlignmentTable) -> Result<(), AlignmentError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["attribute", "condition", "granularity", "rho", "pearson", "n_pairs", "mean_confidence"])?;
    let gran = match table.granularity {
        Granularity::PerAnnotator => "per_annotator",
        Granularity::CommentMean => "comment_mean",
    };
    for r in &table.rows {
        w.write_record([
            r.attribute.name().to_string(),
            r.condition.to_string(),
            gran.to_string(),
            r.rho.to_string(),
            r.pearson.map(|p| p.to_string()).unwrap_or_default(),
            r.n_pairs.to_string(),
            r.mean_confidence.to_string(),
        ])?;
    }
    for s in &table.skipped {
        w.write_record([
            s.attribute.name().to_string(),
            table.condition.to_string(),
            gran.to_string(),
            "skipped".to_string(),
            String::new(),
            "0".to_string(),
            String::new(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Spearman ×100, one row per labelled table, attribute columns ordered by
/// the first table's ρ.
pub fn render_alignment(tables: &[(String, &AlignmentTable)]) -> String {
    let Some((_, first)) = tables.first() else {
        return String::new();
    };
    let mut columns: Vec<Attribute> = first.rows.iter().map(|r| r.attribute).collect();
    for a in Attribute::ALL {
        if !columns.contains(&a) {
            columns.push(a);
        }
    }
    let mut header = vec![String::new()];
    header.extend(columns.iter().map(|a| a.name().to_string()));
    let rows: Vec<Vec<String>> = tables
        .iter()
        .map(|(label, t)| {
            let mut row = vec![label.clone()];
            row.extend(columns.iter().map(|a| t.get(*a).map_or("--".to_string(), |r| table::format_x100(r.rho))));
            row
        })
        .collect();
    table::render(&header, &rows)
}
