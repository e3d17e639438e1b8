//! Deterministic rendering of attribute, persona and direct-classification
//! prompts from plain-text templates with `{name}` placeholders.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::attribute::{Attribute, AttributeSpec};
use crate::corpus::{AnnotatorProfile, CommentRecord};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("annotator `{0}` has an incomplete demographic profile")]
    IncompleteProfile(String),
    #[error("few-shot baseline needs at least one configured example")]
    MissingExamples,
    #[error("prompt for comment `{comment_id}` is {len} chars, over the {budget} char budget")]
    OverBudget { comment_id: String, len: usize, budget: usize },
    #[error("template i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("unknown prompt condition `{0}`")]
    UnknownCondition(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineVariant {
    ZeroShot,
    FewShot,
    Definition,
    AttributeAware,
    AttributeValue,
}

impl BaselineVariant {
    pub const ALL: [BaselineVariant; 5] = [
        BaselineVariant::ZeroShot,
        BaselineVariant::FewShot,
        BaselineVariant::Definition,
        BaselineVariant::AttributeAware,
        BaselineVariant::AttributeValue,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineVariant::ZeroShot => "zero_shot",
            BaselineVariant::FewShot => "few_shot",
            BaselineVariant::Definition => "definition",
            BaselineVariant::AttributeAware => "attribute_aware",
            BaselineVariant::AttributeValue => "attribute_value",
        }
    }

    /// Row label used in rendered tables.
    pub fn display_name(self) -> &'static str {
        match self {
            BaselineVariant::ZeroShot => "Zero-shot",
            BaselineVariant::FewShot => "Few-shot",
            BaselineVariant::Definition => "Definition",
            BaselineVariant::AttributeAware => "Attr. aware",
            BaselineVariant::AttributeValue => "Attr. value",
        }
    }
}

impl fmt::Display for BaselineVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineVariant {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        BaselineVariant::ALL
            .into_iter()
            .find(|v| v.name() == key)
            .ok_or_else(|| PromptError::UnknownCondition(s.to_string()))
    }
}

/// Which prompt family produced a prediction. The baseline variant exists
/// only for the baseline kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PromptCondition {
    Vanilla,
    Persona,
    Baseline(BaselineVariant),
}

impl PromptCondition {
    pub fn baseline_variant(self) -> Option<BaselineVariant> {
        match self {
            PromptCondition::Baseline(v) => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for PromptCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PromptCondition::Vanilla => f.write_str("vanilla"),
            PromptCondition::Persona => f.write_str("persona"),
            PromptCondition::Baseline(v) => write!(f, "baseline/{}", v.name()),
        }
    }
}

impl FromStr for PromptCondition {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "vanilla" => Ok(PromptCondition::Vanilla),
            "persona" => Ok(PromptCondition::Persona),
            other => match other.strip_prefix("baseline/").or_else(|| other.strip_prefix("baseline:")) {
                Some(v) => Ok(PromptCondition::Baseline(v.parse()?)),
                None => Err(PromptError::UnknownCondition(s.to_string())),
            },
        }
    }
}

impl Serialize for PromptCondition {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PromptCondition {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Provenance of a rendered prompt, carried through inference and scoring.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptMeta {
    pub comment_id: String,
    pub attribute: Option<Attribute>,
    pub annotator_id: Option<String>,
    pub condition: PromptCondition,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub system_text: String,
    pub user_text: String,
    /// Valid answer tokens in label order.
    pub expected_label_set: Vec<String>,
    pub meta: PromptMeta,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub text: String,
    pub hate: bool,
}

/// Texts that parameterize the direct-classification prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineTexts {
    pub hate_token: String,
    pub non_hate_token: String,
    pub definition: String,
    pub few_shot_examples: Vec<FewShotExample>,
}

impl Default for BaselineTexts {
    fn default() -> Self {
        BaselineTexts {
            hate_token: "1".into(),
            non_hate_token: "0".into(),
            definition: include_str!("../templates/definition.txt").into(),
            few_shot_examples: Vec::new(),
        }
    }
}

/// The full template set. Every field can be overridden from a directory of
/// plain-text files named after the field (`system.txt`, `attribute.txt`, ...).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub system: String,
    pub attribute: String,
    pub persona_header: String,
    /// Placed between the persona header and the attribute prompt.
    pub persona_separator: String,
    pub baseline_zero_shot: String,
    pub baseline_few_shot: String,
    pub baseline_definition: String,
    pub baseline_attribute_aware: String,
    pub baseline_attribute_value: String,
    pub baseline: BaselineTexts,
    /// Maximum rendered length (system + user) in chars.
    pub max_chars: usize,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            system: include_str!("../templates/system.txt").into(),
            attribute: include_str!("../templates/attribute.txt").into(),
            persona_header: include_str!("../templates/persona_header.txt").into(),
            persona_separator: "\n\n".into(),
            baseline_zero_shot: include_str!("../templates/baseline_zero_shot.txt").into(),
            baseline_few_shot: include_str!("../templates/baseline_few_shot.txt").into(),
            baseline_definition: include_str!("../templates/baseline_definition.txt").into(),
            baseline_attribute_aware: include_str!("../templates/baseline_attribute_aware.txt").into(),
            baseline_attribute_value: include_str!("../templates/baseline_attribute_value.txt").into(),
            baseline: BaselineTexts::default(),
            max_chars: 32_000,
        }
    }
}

/// Replaces `{key}` occurrences in a single left-to-right pass. Substituted
/// values are never rescanned, and unknown placeholders are kept verbatim.
pub fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => {
                let key = &after[..close];
                match vars.iter().find(|(k, _)| *k == key) {
                    Some((_, v)) => out.push_str(v),
                    None => {
                        out.push('{');
                        out.push_str(key);
                        out.push('}');
                    }
                }
                rest = &after[close + 1..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

impl PromptTemplates {
    /// Defaults, with any `<field>.txt` found in `dir` taking precedence.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, PromptError> {
        let dir = dir.as_ref();
        let mut t = PromptTemplates::default();
        let read = |name: &str, slot: &mut String| -> Result<(), PromptError> {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                *slot = std::fs::read_to_string(path)?;
            }
            Ok(())
        };
        read("system", &mut t.system)?;
        read("attribute", &mut t.attribute)?;
        read("persona_header", &mut t.persona_header)?;
        read("baseline_zero_shot", &mut t.baseline_zero_shot)?;
        read("baseline_few_shot", &mut t.baseline_few_shot)?;
        read("baseline_definition", &mut t.baseline_definition)?;
        read("baseline_attribute_aware", &mut t.baseline_attribute_aware)?;
        read("baseline_attribute_value", &mut t.baseline_attribute_value)?;
        read("definition", &mut t.baseline.definition)?;
        Ok(t)
    }

    fn check_budget(&self, prompt: RenderedPrompt) -> Result<RenderedPrompt, PromptError> {
        let len = prompt.system_text.chars().count() + prompt.user_text.chars().count();
        if len > self.max_chars {
            return Err(PromptError::OverBudget {
                comment_id: prompt.meta.comment_id,
                len,
                budget: self.max_chars,
            });
        }
        Ok(prompt)
    }

    fn attribute_user_text(&self, spec: &AttributeSpec, comment: &CommentRecord) -> String {
        let scale_max = spec.scale_max.to_string();
        fill(
            &self.attribute,
            &[
                ("attribute", spec.name()),
                ("rubric", spec.rubric),
                ("comment", &comment.text),
                ("scale_max", &scale_max),
            ],
        )
    }

    pub fn build_vanilla_prompt(
        &self,
        spec: &AttributeSpec,
        comment: &CommentRecord,
    ) -> Result<RenderedPrompt, PromptError> {
        self.check_budget(RenderedPrompt {
            system_text: self.system.clone(),
            user_text: self.attribute_user_text(spec, comment),
            expected_label_set: spec.label_tokens(),
            meta: PromptMeta {
                comment_id: comment.comment_id.clone(),
                attribute: Some(spec.attribute),
                annotator_id: None,
                condition: PromptCondition::Vanilla,
            },
        })
    }

    pub fn persona_header(&self, profile: &AnnotatorProfile) -> Result<String, PromptError> {
        let incomplete = || PromptError::IncompleteProfile(profile.annotator_id.clone());
        let age = profile.age.ok_or_else(incomplete)?.to_string();
        let category = profile.age_category.ok_or_else(incomplete)?.to_string();
        let field = |v: &Option<String>| v.clone().ok_or_else(incomplete);
        Ok(fill(
            &self.persona_header,
            &[
                ("gender", &field(&profile.gender)?),
                ("age", &age),
                ("age_category", &category),
                ("race", &field(&profile.race)?),
                ("religion", &field(&profile.religion)?),
                ("ideology", &field(&profile.ideology)?),
            ],
        ))
    }

    /// The persona header followed by the unchanged attribute prompt.
    pub fn build_persona_prompt(
        &self,
        spec: &AttributeSpec,
        comment: &CommentRecord,
        profile: &AnnotatorProfile,
    ) -> Result<RenderedPrompt, PromptError> {
        let header = self.persona_header(profile)?;
        let user_text = format!(
            "{header}{}{}",
            self.persona_separator,
            self.attribute_user_text(spec, comment)
        );
        self.check_budget(RenderedPrompt {
            system_text: self.system.clone(),
            user_text,
            expected_label_set: spec.label_tokens(),
            meta: PromptMeta {
                comment_id: comment.comment_id.clone(),
                attribute: Some(spec.attribute),
                annotator_id: Some(profile.annotator_id.clone()),
                condition: PromptCondition::Persona,
            },
        })
    }

    pub fn build_baseline_prompt(
        &self,
        variant: BaselineVariant,
        comment: &CommentRecord,
    ) -> Result<RenderedPrompt, PromptError> {
        let texts = &self.baseline;
        let template = match variant {
            BaselineVariant::ZeroShot => &self.baseline_zero_shot,
            BaselineVariant::FewShot => &self.baseline_few_shot,
            BaselineVariant::Definition => &self.baseline_definition,
            BaselineVariant::AttributeAware => &self.baseline_attribute_aware,
            BaselineVariant::AttributeValue => &self.baseline_attribute_value,
        };
        if variant == BaselineVariant::FewShot && texts.few_shot_examples.is_empty() {
            return Err(PromptError::MissingExamples);
        }
        let examples = texts
            .few_shot_examples
            .iter()
            .enumerate()
            .map(|(i, ex)| {
                let label = if ex.hate { &texts.hate_token } else { &texts.non_hate_token };
                format!("Example {}:\n\"\"\"\n{}\n\"\"\"\nLabel: {}", i + 1, ex.text, label)
            })
            .collect::<Vec<_>>()
            .join("\n\n");
        let attributes = Attribute::ALL.map(|a| a.name()).join(", ");
        let attribute_scales = crate::attribute::REGISTRY
            .iter()
            .map(|s| format!("- {} (0-{}): {}", s.name(), s.scale_max, s.rubric))
            .collect::<Vec<_>>()
            .join("\n");
        let user_text = fill(
            template,
            &[
                ("comment", &comment.text),
                ("examples", &examples),
                ("definition", &texts.definition),
                ("attributes", &attributes),
                ("attribute_scales", &attribute_scales),
                ("hate_token", &texts.hate_token),
                ("non_hate_token", &texts.non_hate_token),
            ],
        );
        self.check_budget(RenderedPrompt {
            system_text: self.system.clone(),
            user_text,
            expected_label_set: vec![texts.non_hate_token.clone(), texts.hate_token.clone()],
            meta: PromptMeta {
                comment_id: comment.comment_id.clone(),
                attribute: None,
                annotator_id: None,
                condition: PromptCondition::Baseline(variant),
            },
        })
    }
}
