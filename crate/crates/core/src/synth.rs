//! Synthetic corpora with known ground truth.
//!
//! Every comment has a latent severity `z`. Each attribute's true ordinal
//! value is a noisy logistic map of `z`, coded so that larger means more
//! hateful, the way the human ratings are coded. Human annotators report the
//! true value with occasional ±1 slips, and the continuous score is
//! `θ = β · truth + offset + N(0, σ)`.
//!
//! The simulated model reads attributes flagged in `inversion_map` on the
//! opposite scale (`s - truth`), mislabels a fraction of items, and reports
//! a confidence that is high for correct labels and lower for wrong ones in
//! proportion to `confidence_fidelity`.

use std::collections::HashMap;
use std::io::Write;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attribute::{Attribute, PerAttribute, N_ATTRIBUTES};
use crate::corpus::{write_rows, AgeCategory, AnnotatorProfile, Corpus, CorpusError, CorpusRow, Schema};
use crate::prompting::PromptCondition;

/// Confidence of a correct label at full fidelity.
pub const CONFIDENCE_CORRECT: f64 = 0.95;
/// Fraction of the way from uniform to `CONFIDENCE_CORRECT` that a wrong
/// label reaches at full fidelity.
pub const WRONG_CONFIDENCE_FRACTION: f64 = 0.25;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid world config: {0}")]
    Config(String),
    #[error("unknown comment `{0}` in synthetic world")]
    UnknownComment(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("world file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("world file i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub seed: u64,
    pub n_comments: usize,
    pub n_annotators: usize,
    pub annotators_per_comment: usize,
    /// Weight of each true attribute value in θ, registry order.
    pub true_weights: PerAttribute<f64>,
    /// Attributes the simulated model reads on the reversed scale.
    pub inversion_map: PerAttribute<bool>,
    pub noise_sigma: f64,
    /// 0 gives uniform confidences, 1 gives fully informative ones.
    pub confidence_fidelity: f64,
    /// Probability that the simulated model emits a wrong label.
    pub label_error_rate: f64,
    /// Probability that a human rating is off by one.
    pub human_noise_rate: f64,
    /// Persona confidences are pulled toward uniform by this factor.
    pub persona_confidence_shrink: f64,
    /// Fraction of annotators whose ideology field is left blank.
    pub incomplete_profile_rate: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        let mut inversion_map = [false; N_ATTRIBUTES];
        for a in Attribute::EVALUATIVE {
            inversion_map[a.index()] = true;
        }
        WorldConfig {
            seed: 42,
            n_comments: 2000,
            n_annotators: 400,
            annotators_per_comment: 3,
            true_weights: [0.35, 0.6, 0.3, 0.3, 0.35, 0.4, 0.45, 0.25, 0.3, 0.3],
            inversion_map,
            noise_sigma: 0.1,
            confidence_fidelity: 0.9,
            label_error_rate: 0.05,
            human_noise_rate: 0.3,
            persona_confidence_shrink: 0.85,
            incomplete_profile_rate: 0.0,
        }
    }
}

impl WorldConfig {
    fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Config(m.to_string()));
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if self.n_comments == 0 {
            return bad("n_comments must be at least 1");
        }
        if self.annotators_per_comment == 0 || self.annotators_per_comment > self.n_annotators {
            return bad("annotators_per_comment must be in 1..=n_annotators");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be finite and non-negative");
        }
        if !self.true_weights.iter().all(|w| w.is_finite()) {
            return bad("true_weights must be finite");
        }
        for (name, v) in [
            ("confidence_fidelity", self.confidence_fidelity),
            ("label_error_rate", self.label_error_rate),
            ("human_noise_rate", self.human_noise_rate),
            ("persona_confidence_shrink", self.persona_confidence_shrink),
            ("incomplete_profile_rate", self.incomplete_profile_rate),
        ] {
            if !unit(v) {
                return Err(SynthError::Config(format!("{name} must be in [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticComment {
    pub comment_id: String,
    pub latent: f64,
    /// True values in the human coding (larger = more hateful).
    pub truth: PerAttribute<u8>,
    /// What the simulated model answers.
    pub model_label: PerAttribute<u8>,
    pub model_correct: PerAttribute<bool>,
    pub hate_score: f64,
    pub annotator_ids: Vec<String>,
    /// One row per entry of `annotator_ids`.
    pub human: Vec<PerAttribute<u8>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorld {
    pub config: WorldConfig,
    pub comments: Vec<SyntheticComment>,
    pub annotators: Vec<AnnotatorProfile>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Location of each attribute on the latent axis; rarer behaviours sit further right.
const OFFSETS: PerAttribute<f64> = [-0.3, 0.3, 0.0, 0.2, 0.6, 0.9, 1.3, 0.2, -0.2, -0.2];
const SLOPE: f64 = 1.6;
const IDIOSYNCRATIC_SD: f64 = 0.7;

const GENDERS: [&str; 3] = ["female", "male", "non-binary"];
const RACES: [&str; 6] = ["white", "black", "asian", "latinx", "middle_eastern", "multiracial"];
const RELIGIONS: [&str; 6] = ["christian", "muslim", "jewish", "hindu", "atheist", "none"];
const IDEOLOGIES: [&str; 4] = ["liberal", "moderate", "conservative", "progressive"];

pub fn generate_world(config: &WorldConfig) -> Result<SyntheticWorld, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let score_noise = Normal::new(0.0, config.noise_sigma).map_err(|e| SynthError::Config(e.to_string()))?;

    let annotators: Vec<AnnotatorProfile> = (0..config.n_annotators)
        .map(|i| {
            let age: u32 = rng.random_range(18..=80);
            let blank_ideology = rng.random_bool(config.incomplete_profile_rate);
            AnnotatorProfile {
                annotator_id: format!("{}", 10_000 + i),
                gender: Some(GENDERS[rng.random_range(0..GENDERS.len())].to_string()),
                age: Some(age),
                age_category: Some(if age < 40 { AgeCategory::Young } else { AgeCategory::Old }),
                race: Some(RACES[rng.random_range(0..RACES.len())].to_string()),
                religion: Some(RELIGIONS[rng.random_range(0..RELIGIONS.len())].to_string()),
                ideology: (!blank_ideology).then(|| IDEOLOGIES[rng.random_range(0..IDEOLOGIES.len())].to_string()),
            }
        })
        .collect();

    let offset: f64 = -Attribute::ALL
        .iter()
        .map(|a| config.true_weights[a.index()] * f64::from(a.scale_max()) / 2.0)
        .sum::<f64>();

    let mut comments = Vec::with_capacity(config.n_comments);
    for n in 0..config.n_comments {
        let latent: f64 = std_normal.sample(&mut rng);
        let mut truth = [0u8; N_ATTRIBUTES];
        let mut model_label = [0u8; N_ATTRIBUTES];
        let mut model_correct = [true; N_ATTRIBUTES];
        for a in Attribute::ALL {
            let i = a.index();
            let s = a.scale_max();
            let eta = SLOPE * (latent - OFFSETS[i]) + IDIOSYNCRATIC_SD * std_normal.sample(&mut rng);
            truth[i] = (f64::from(s) * sigmoid(eta)).round().clamp(0.0, f64::from(s)) as u8;
            let perceived = if config.inversion_map[i] { s - truth[i] } else { truth[i] };
            if rng.random_bool(config.label_error_rate) {
                // Uniform over the other labels.
                let mut wrong = rng.random_range(0..s);
                if wrong >= perceived {
                    wrong += 1;
                }
                model_label[i] = wrong;
                model_correct[i] = false;
            } else {
                model_label[i] = perceived;
            }
        }
        let linear: f64 = Attribute::ALL
            .iter()
            .map(|a| config.true_weights[a.index()] * f64::from(truth[a.index()]))
            .sum();
        let hate_score = linear + offset + if config.noise_sigma > 0.0 { score_noise.sample(&mut rng) } else { 0.0 };

        let picks = sample(&mut rng, config.n_annotators, config.annotators_per_comment);
        let mut picked: Vec<usize> = picks.into_iter().collect();
        picked.sort_unstable();
        let mut annotator_ids = Vec::with_capacity(picked.len());
        let mut human = Vec::with_capacity(picked.len());
        for idx in picked {
            annotator_ids.push(annotators[idx].annotator_id.clone());
            let row: PerAttribute<u8> = std::array::from_fn(|i| {
                let s = i32::from(Attribute::ALL[i].scale_max());
                let mut v = i32::from(truth[i]);
                if rng.random_bool(config.human_noise_rate) {
                    v += if rng.random_bool(0.5) { 1 } else { -1 };
                }
                v.clamp(0, s) as u8
            });
            human.push(row);
        }

        comments.push(SyntheticComment {
            comment_id: (n + 1).to_string(),
            latent,
            truth,
            model_label,
            model_correct,
            hate_score,
            annotator_ids,
            human,
        });
    }

    let mut world = SyntheticWorld {
        config: config.clone(),
        comments,
        annotators,
        index: HashMap::new(),
    };
    world.rebuild_index();
    Ok(world)
}

impl SyntheticWorld {
    fn rebuild_index(&mut self) {
        self.index = self
            .comments
            .iter()
            .enumerate()
            .map(|(i, c)| (c.comment_id.clone(), i))
            .collect();
    }

    pub fn comment(&self, comment_id: &str) -> Result<&SyntheticComment, SynthError> {
        self.index
            .get(comment_id)
            .map(|&i| &self.comments[i])
            .ok_or_else(|| SynthError::UnknownComment(comment_id.to_string()))
    }

    /// The simulated model's label and target confidence.
    pub fn world_label(
        &self,
        comment_id: &str,
        attribute: Attribute,
        condition: PromptCondition,
    ) -> Result<(u8, f64), SynthError> {
        let c = self.comment(comment_id)?;
        let i = attribute.index();
        let uniform = 1.0 / (f64::from(attribute.scale_max()) + 1.0);
        let f = self.config.confidence_fidelity;
        let high = if c.model_correct[i] {
            CONFIDENCE_CORRECT
        } else {
            uniform + WRONG_CONFIDENCE_FRACTION * (CONFIDENCE_CORRECT - uniform)
        };
        let mut confidence = uniform + f * (high - uniform);
        if condition == PromptCondition::Persona {
            confidence = uniform + self.config.persona_confidence_shrink * (confidence - uniform);
        }
        Ok((c.model_label[i], confidence))
    }

    pub fn corpus_rows(&self) -> Vec<CorpusRow> {
        let profiles: HashMap<&str, &AnnotatorProfile> =
            self.annotators.iter().map(|p| (p.annotator_id.as_str(), p)).collect();
        let mut rows = Vec::new();
        for c in &self.comments {
            for (annotator, values) in c.annotator_ids.iter().zip(&c.human) {
                rows.push(CorpusRow {
                    comment_id: c.comment_id.clone(),
                    annotator_id: annotator.clone(),
                    text: format!("synthetic comment {}", c.comment_id),
                    values: values.map(Some),
                    hate_score: c.hate_score,
                    profile: (*profiles[annotator.as_str()]).clone(),
                });
            }
        }
        rows
    }

    pub fn write_corpus<W: Write>(&self, writer: W, schema: &Schema) -> Result<(), SynthError> {
        write_rows(writer, schema, &self.corpus_rows())?;
        Ok(())
    }

    /// The world's corpus, loaded through the regular validating loader.
    pub fn to_corpus(&self) -> Result<Corpus, SynthError> {
        let schema = Schema::default();
        let mut buf = Vec::new();
        self.write_corpus(&mut buf, &schema)?;
        Ok(Corpus::from_reader(buf.as_slice(), &schema)?)
    }

    pub fn to_json<W: Write>(&self, writer: W) -> Result<(), SynthError> {
        serde_json::to_writer(writer, self)?;
        Ok(())
    }

    pub fn from_json<R: std::io::Read>(reader: R) -> Result<Self, SynthError> {
        let mut world: SyntheticWorld = serde_json::from_reader(reader)?;
        world.rebuild_index();
        Ok(world)
    }
}
