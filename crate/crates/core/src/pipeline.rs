//! In-memory orchestration from corpus to predictions to reconstruction.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::{alignment_table, AlignmentError, AlignmentTable, Granularity};
use crate::attribute::Attribute;
use crate::corpus::{Corpus, CorpusError};
use crate::inference::{DecodingConfig, InferenceClient, InferenceError, MockBackend, ResponseCache};
use crate::prompting::{PromptCondition, PromptError, PromptTemplates, RenderedPrompt};
use crate::reconstruction::{
    ablation_score, collect_comment_features, fit_all, kfold_cv, AblationFormula, AblationResult, CommentFeatures,
    CvConfig, CvResult, FeatureKind, LambdaSpec, ReconError, RidgeModel,
};
use crate::scoring::{predict_attribute, AttributePrediction, PredictionStatus};
use crate::synth::{generate_world, SynthError, SyntheticWorld, WorldConfig};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("corpus: {0}")]
    Corpus(#[from] CorpusError),
    #[error("prompt: {0}")]
    Prompt(#[from] PromptError),
    #[error("inference: {0}")]
    Inference(#[from] InferenceError),
    #[error("alignment: {0}")]
    Alignment(#[from] AlignmentError),
    #[error("reconstruction: {0}")]
    Recon(#[from] ReconError),
    #[error("synthetic world: {0}")]
    Synth(#[from] SynthError),
    #[error("condition {0} is not an attribute condition")]
    NotAttributeCondition(PromptCondition),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub predictions: Vec<AttributePrediction>,
    pub prompts: usize,
    /// (comment, annotator) pairs skipped for an incomplete profile.
    pub skipped_profiles: usize,
    /// Requests that failed; their predictions are recorded as missing.
    pub failed: usize,
}

/// Renders every attribute prompt of `condition` for the corpus, in
/// comment, annotator, attribute order.
pub fn attribute_prompts(
    corpus: &Corpus,
    templates: &PromptTemplates,
    condition: PromptCondition,
) -> Result<(Vec<RenderedPrompt>, usize), PipelineError> {
    let mut prompts = Vec::new();
    let mut skipped = 0;
    for comment in corpus.comments() {
        match condition {
            PromptCondition::Vanilla => {
                for a in Attribute::ALL {
                    prompts.push(templates.build_vanilla_prompt(a.spec(), comment)?);
                }
            }
            PromptCondition::Persona => {
                for annotator_id in comment.ratings.keys() {
                    let profile = corpus.annotator(annotator_id)?;
                    if !profile.is_complete() {
                        skipped += 1;
                        continue;
                    }
                    for a in Attribute::ALL {
                        prompts.push(templates.build_persona_prompt(a.spec(), comment, profile)?);
                    }
                }
            }
            other => return Err(PipelineError::NotAttributeCondition(other)),
        }
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} persona prompts with incomplete annotator profiles");
    }
    Ok((prompts, skipped))
}

pub fn annotate(
    corpus: &Corpus,
    templates: &PromptTemplates,
    client: &InferenceClient,
    condition: PromptCondition,
    parallelism: usize,
) -> Result<Annotation, PipelineError> {
    let (prompts, skipped_profiles) = attribute_prompts(corpus, templates, condition)?;
    let responses = client.batch_annotate(&prompts, parallelism);
    let mut failed = 0;
    let predictions = prompts
        .iter()
        .zip(responses)
        .map(|(prompt, response)| {
            let attribute = prompt.meta.attribute.expect("attribute prompt");
            match response {
                Ok(r) => predict_attribute(&r, attribute.spec(), &prompt.meta),
                Err(e) => {
                    log::warn!("comment {} {attribute}: {e}", prompt.meta.comment_id);
                    failed += 1;
                    AttributePrediction {
                        comment_id: prompt.meta.comment_id.clone(),
                        annotator_id: prompt.meta.annotator_id.clone(),
                        attribute,
                        condition,
                        label: None,
                        confidence: None,
                        raw_logprobs: BTreeMap::new(),
                        status: PredictionStatus::Missing,
                    }
                }
            }
        })
        .collect();
    Ok(Annotation {
        predictions,
        prompts: prompts.len(),
        skipped_profiles,
        failed,
    })
}

/// Client over the mock backend with an in-memory cache.
pub fn mock_client(world: Arc<SyntheticWorld>) -> InferenceClient {
    let config = DecodingConfig {
        model_name: "mock".into(),
        ..Default::default()
    };
    InferenceClient::new(Arc::new(MockBackend::new(world)), Arc::new(ResponseCache::in_memory()), config)
        .expect("default decoding config is valid")
}

/// Outputs of one condition's end-to-end run.
#[derive(Debug, Clone)]
pub struct ConditionRun {
    pub condition: PromptCondition,
    pub annotation: Annotation,
    pub alignment: AlignmentTable,
    pub rows: Vec<CommentFeatures>,
    pub cv: CvResult,
    pub model: RidgeModel,
}

pub fn run_condition(
    corpus: &Corpus,
    templates: &PromptTemplates,
    client: &InferenceClient,
    condition: PromptCondition,
    cv: &CvConfig,
    parallelism: usize,
) -> Result<ConditionRun, PipelineError> {
    let annotation = annotate(corpus, templates, client, condition, parallelism)?;
    let alignment = alignment_table(&annotation.predictions, corpus, condition, Granularity::default_for(condition))?;
    let rows = collect_comment_features(&annotation.predictions, corpus, condition);
    let result = kfold_cv(&rows, FeatureKind::Weighted, cv)?;
    let model = fit_all(&rows, FeatureKind::Weighted, consensus_lambda(cv, &result), cv.standardization)?;
    Ok(ConditionRun {
        condition,
        annotation,
        alignment,
        rows,
        cv: result,
        model,
    })
}

/// The fixed λ, or for a grid the value chosen by most folds (ties to the
/// smallest).
pub fn consensus_lambda(cv: &CvConfig, result: &CvResult) -> f64 {
    match &cv.lambda {
        LambdaSpec::Fixed(l) => *l,
        LambdaSpec::Grid(_) => {
            let mut picks: Vec<f64> = result.folds.iter().filter_map(|f| f.lambda).collect();
            picks.sort_by(f64::total_cmp);
            let mut best = (0, picks.first().copied().unwrap_or(1.0));
            for l in &picks {
                let n = picks.iter().filter(|p| *p == l).count();
                if n > best.0 {
                    best = (n, *l);
                }
            }
            best.1
        }
    }
}

pub fn run_ablations(rows: &[CommentFeatures], cv: &CvConfig) -> Result<Vec<AblationResult>, PipelineError> {
    AblationFormula::ALL
        .iter()
        .map(|f| ablation_score(*f, rows, cv).map_err(PipelineError::from))
        .collect()
}

/// Generates a world and runs the vanilla condition against its mock.
pub fn synthetic_run(config: &WorldConfig, cv: &CvConfig) -> Result<(Arc<SyntheticWorld>, Corpus, ConditionRun), PipelineError> {
    let world = Arc::new(generate_world(config)?);
    let corpus = world.to_corpus()?;
    let client = mock_client(world.clone());
    let run = run_condition(&corpus, &PromptTemplates::default(), &client, PromptCondition::Vanilla, cv, 1)?;
    Ok((world, corpus, run))
}
