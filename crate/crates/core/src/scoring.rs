//! Turning a single-token response into a validated label and a confidence.
//!
//! Confidence is the softmax mass of the chosen label over the label tokens
//! that appear in the reported top-k, so it ignores whatever probability the
//! model put on non-label tokens. Keys are matched after trimming
//! whitespace; several keys mapping to the same label (tokenizer variants
//! such as `"3"` and `" 3"`) have their probabilities summed.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attribute::{Attribute, AttributeSpec};
use crate::inference::TokenResponse;
use crate::prompting::{PromptCondition, PromptMeta};

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("`{token}` is not a valid label for {attribute} (0..={scale_max})")]
    InvalidLabel {
        token: String,
        attribute: Attribute,
        scale_max: u8,
    },
    #[error("no valid label token among the reported logprobs")]
    NoLabelToken,
    #[error("prediction record i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("prediction record line {line}: {source}")]
    Record {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionStatus {
    /// The top token was a valid label.
    Ok,
    /// The top token was not a label but some label token was in the top-k.
    Fallback,
    /// No label token anywhere in the response.
    Missing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributePrediction {
    pub comment_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator_id: Option<String>,
    pub attribute: Attribute,
    pub condition: PromptCondition,
    pub label: Option<u8>,
    pub confidence: Option<f64>,
    pub raw_logprobs: BTreeMap<String, f64>,
    pub status: PredictionStatus,
}

impl AttributePrediction {
    /// `(S, C)` when the prediction is usable.
    pub fn scored(&self) -> Option<(u8, f64)> {
        match (self.status, self.label, self.confidence) {
            (PredictionStatus::Missing, _, _) => None,
            (_, Some(l), Some(c)) => Some((l, c)),
            _ => None,
        }
    }
}

pub fn parse_label(top_token: &str, spec: &AttributeSpec) -> Result<u8, ScoringError> {
    let invalid = || ScoringError::InvalidLabel {
        token: top_token.to_string(),
        attribute: spec.attribute,
        scale_max: spec.scale_max,
    };
    let t = top_token.trim();
    if t.is_empty() || !t.bytes().all(|b| b.is_ascii_digit()) {
        return Err(invalid());
    }
    match t.parse::<u8>() {
        Ok(v) if v <= spec.scale_max => Ok(v),
        _ => Err(invalid()),
    }
}

/// Renormalized probability of each token in `tokens`, or `None` when none
/// of them is present. Absent tokens get zero mass.
pub fn token_masses(logprobs: &BTreeMap<String, f64>, tokens: &[String]) -> Option<Vec<f64>> {
    let matches = |key: &str, token: &str| key.trim().eq_ignore_ascii_case(token.trim());
    let max = logprobs
        .iter()
        .filter(|(k, v)| v.is_finite() && tokens.iter().any(|t| matches(k, t)))
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    let mut masses = vec![0.0; tokens.len()];
    for (key, lp) in logprobs {
        if !lp.is_finite() {
            continue;
        }
        if let Some(i) = tokens.iter().position(|t| matches(key, t)) {
            masses[i] += (lp - max).exp();
        }
    }
    let total: f64 = masses.iter().sum();
    Some(masses.into_iter().map(|m| m / total).collect())
}

/// Index of the largest mass; ties resolve to the lowest index.
fn argmax(masses: &[f64]) -> usize {
    let mut best = 0;
    for (i, m) in masses.iter().enumerate() {
        if *m > masses[best] {
            best = i;
        }
    }
    best
}

/// Chosen label and its renormalized confidence over the valid labels.
pub fn extract_confidence(
    logprobs: &BTreeMap<String, f64>,
    spec: &AttributeSpec,
) -> Result<(u8, f64), ScoringError> {
    let masses = token_masses(logprobs, &spec.label_tokens()).ok_or(ScoringError::NoLabelToken)?;
    let k = argmax(&masses);
    Ok((k as u8, masses[k]))
}

pub fn predict_attribute(
    response: &TokenResponse,
    spec: &AttributeSpec,
    meta: &PromptMeta,
) -> AttributePrediction {
    let masses = token_masses(&response.logprobs, &spec.label_tokens());
    let (label, confidence, status) = match (parse_label(&response.top_token, spec), masses) {
        (Ok(l), Some(m)) => (Some(l), Some(m[l as usize]), PredictionStatus::Ok),
        // The top token is always among the reported logprobs from a real
        // endpoint; a response without it still carries the label.
        (Ok(l), None) => (Some(l), Some(1.0), PredictionStatus::Ok),
        (Err(_), Some(m)) => {
            let k = argmax(&m);
            (Some(k as u8), Some(m[k]), PredictionStatus::Fallback)
        }
        (Err(_), None) => (None, None, PredictionStatus::Missing),
    };
    AttributePrediction {
        comment_id: meta.comment_id.clone(),
        annotator_id: meta.annotator_id.clone(),
        attribute: spec.attribute,
        condition: meta.condition,
        label,
        confidence,
        raw_logprobs: response.logprobs.clone(),
        status,
    }
}

/// A parsed direct-classification answer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryPrediction {
    pub hate: Option<bool>,
    pub confidence: Option<f64>,
    pub status: PredictionStatus,
}

pub fn predict_binary(response: &TokenResponse, non_hate_token: &str, hate_token: &str) -> BinaryPrediction {
    let tokens = [non_hate_token.to_string(), hate_token.to_string()];
    let top = response.top_token.trim();
    let direct = tokens.iter().position(|t| t.trim().eq_ignore_ascii_case(top));
    let masses = token_masses(&response.logprobs, &tokens);
    match (direct, masses) {
        (Some(i), m) => BinaryPrediction {
            hate: Some(i == 1),
            confidence: Some(m.map_or(1.0, |m| m[i])),
            status: PredictionStatus::Ok,
        },
        (None, Some(m)) => {
            let i = argmax(&m);
            BinaryPrediction {
                hate: Some(i == 1),
                confidence: Some(m[i]),
                status: PredictionStatus::Fallback,
            }
        }
        (None, None) => BinaryPrediction {
            hate: None,
            confidence: None,
            status: PredictionStatus::Missing,
        },
    }
}

/// Writes one JSON object per line.
pub fn write_predictions<'a, W: Write>(
    mut writer: W,
    predictions: impl IntoIterator<Item = &'a AttributePrediction>,
) -> Result<(), ScoringError> {
    for p in predictions {
        let line = serde_json::to_string(p).map_err(|source| ScoringError::Record { line: 0, source })?;
        writeln!(writer, "{line}")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_predictions<R: BufRead>(reader: R) -> Result<Vec<AttributePrediction>, ScoringError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| ScoringError::Record { line: i + 1, source })?);
    }
    Ok(out)
}
