//! Browser bindings for the static demo page in `www/`.
//!
//! Every export takes and returns JSON strings so the page needs no
//! generated type bindings beyond `wasm-bindgen`'s glue.

use std::collections::BTreeMap;

use mhs_recon::corpus::{AgeCategory, AnnotatorProfile, CommentRecord};
use mhs_recon::pipeline::{run_ablations, synthetic_run};
use mhs_recon::reconstruction::CvConfig;
use mhs_recon::scoring::token_masses;
use mhs_recon::synth::WorldConfig;
use mhs_recon::{Attribute, BaselineVariant, PromptCondition, PromptTemplates};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct ConfidenceView {
    pub label: u8,
    pub confidence: f64,
    /// Renormalized mass per label, `0..=scale_max`.
    pub masses: Vec<f64>,
}

pub fn confidence_json(logprobs_json: &str, attribute: &str) -> Result<String, String> {
    let attribute: Attribute = attribute.parse().map_err(|e| format!("{e}"))?;
    let logprobs: BTreeMap<String, f64> = serde_json::from_str(logprobs_json).map_err(|e| e.to_string())?;
    let masses = token_masses(&logprobs, &attribute.spec().label_tokens()).ok_or("no label token among the logprobs")?;
    // Lowest label wins ties.
    let (label, confidence) = masses
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, m)| if *m > best.1 { (i, *m) } else { best });
    serde_json::to_string(&ConfidenceView { label: label as u8, confidence, masses }).map_err(|e| e.to_string())
}

#[derive(Debug, Deserialize)]
#[serde(default)]
pub struct DemoWorld {
    pub n_comments: usize,
    pub seed: u64,
    pub noise_sigma: f64,
    pub confidence_fidelity: f64,
    pub label_error_rate: f64,
    pub lambda: f64,
}

impl Default for DemoWorld {
    fn default() -> Self {
        let w = WorldConfig::default();
        DemoWorld {
            n_comments: 500,
            seed: w.seed,
            noise_sigma: w.noise_sigma,
            confidence_fidelity: w.confidence_fidelity,
            label_error_rate: w.label_error_rate,
            lambda: 1.0,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ReconstructionView {
    pub attributes: Vec<&'static str>,
    pub weights: Vec<f64>,
    pub rho: Vec<Option<f64>>,
    pub r2_mean: f64,
    pub r2_std: f64,
    pub f1: f64,
    pub accuracy: f64,
    /// Formula name and mean cross-validated R².
    pub ablation: Vec<(String, f64)>,
    /// (target, out-of-fold prediction), at most 400 points.
    pub scatter: Vec<(f64, f64)>,
}

pub fn reconstruction_json(params_json: &str) -> Result<String, String> {
    let p: DemoWorld = serde_json::from_str(params_json).map_err(|e| e.to_string())?;
    if !(20..=5000).contains(&p.n_comments) {
        return Err("n_comments must be between 20 and 5000".into());
    }
    let world = WorldConfig {
        n_comments: p.n_comments,
        seed: p.seed,
        noise_sigma: p.noise_sigma,
        confidence_fidelity: p.confidence_fidelity,
        label_error_rate: p.label_error_rate,
        ..Default::default()
    };
    let cv = CvConfig { lambda: mhs_recon::reconstruction::LambdaSpec::Fixed(p.lambda), ..Default::default() };
    let (_, _, run) = synthetic_run(&world, &cv).map_err(|e| e.to_string())?;
    let ablation = run_ablations(&run.rows, &cv).map_err(|e| e.to_string())?;
    let step = run.cv.oof.len().div_ceil(400).max(1);
    let view = ReconstructionView {
        attributes: Attribute::ALL.iter().map(|a| a.name()).collect(),
        weights: run.model.raw_weights(),
        rho: Attribute::ALL.iter().map(|a| run.alignment.get(*a).map(|r| r.rho)).collect(),
        r2_mean: run.cv.r2_mean,
        r2_std: run.cv.r2_std,
        f1: run.cv.metrics.f1,
        accuracy: run.cv.metrics.accuracy,
        ablation: ablation.iter().map(|a| (a.formula.to_string(), a.cv.r2_mean)).collect(),
        scatter: run.cv.oof.iter().step_by(step).map(|o| (o.target, o.predicted)).collect(),
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

#[derive(Debug, Deserialize)]
struct Persona {
    gender: String,
    age: u32,
    race: String,
    religion: String,
    ideology: String,
}

#[derive(Debug, Serialize)]
pub struct PromptView {
    pub system: String,
    pub user: String,
    pub labels: Vec<String>,
}

/// `condition` is `vanilla`, `persona` or `baseline/<variant>`; `target`
/// is an attribute name for the first two and ignored otherwise.
pub fn prompt_json(condition: &str, target: &str, comment: &str, persona_json: &str) -> Result<String, String> {
    let condition: PromptCondition = condition.parse().map_err(|e| format!("{e}"))?;
    let record = CommentRecord {
        comment_id: "demo".into(),
        text: comment.to_string(),
        ratings: BTreeMap::new(),
        hate_score: 0.0,
    };
    let t = PromptTemplates::default();
    let prompt = match condition {
        PromptCondition::Vanilla => {
            let a: Attribute = target.parse().map_err(|e| format!("{e}"))?;
            t.build_vanilla_prompt(a.spec(), &record)
        }
        PromptCondition::Persona => {
            let a: Attribute = target.parse().map_err(|e| format!("{e}"))?;
            let p: Persona = serde_json::from_str(persona_json).map_err(|e| e.to_string())?;
            let profile = AnnotatorProfile {
                annotator_id: "demo".into(),
                gender: Some(p.gender),
                age: Some(p.age),
                age_category: Some(if p.age < 40 { AgeCategory::Young } else { AgeCategory::Old }),
                race: Some(p.race),
                religion: Some(p.religion),
                ideology: Some(p.ideology),
            };
            t.build_persona_prompt(a.spec(), &record, &profile)
        }
        PromptCondition::Baseline(BaselineVariant::FewShot) => {
            return Err("few-shot prompts need labelled examples from a corpus".into());
        }
        PromptCondition::Baseline(v) => t.build_baseline_prompt(v, &record),
    }
    .map_err(|e| e.to_string())?;
    serde_json::to_string(&PromptView {
        system: prompt.system_text,
        user: prompt.user_text,
        labels: prompt.expected_label_set,
    })
    .map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = extractConfidence)]
pub fn extract_confidence(logprobs_json: &str, attribute: &str) -> Result<String, JsError> {
    confidence_json(logprobs_json, attribute).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = reconstructSynthetic)]
pub fn reconstruct_synthetic(params_json: &str) -> Result<String, JsError> {
    reconstruction_json(params_json).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = previewPrompt)]
pub fn preview_prompt(condition: &str, target: &str, comment: &str, persona_json: &str) -> Result<String, JsError> {
    prompt_json(condition, target, comment, persona_json).map_err(|e| JsError::new(&e))
}
