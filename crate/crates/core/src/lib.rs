//! Reconstructs a continuous hate-speech score from per-attribute LLM
//! ratings.
//!
//! The flow is corpus → prompts → single-token completions → label and
//! confidence → confidence-weighted features → ridge regression, with
//! alignment and classification metrics alongside.

pub mod alignment;
pub mod attribute;
pub mod corpus;
pub mod evaluation;
pub mod inference;
pub mod pipeline;
pub mod prompting;
pub mod reconstruction;
pub mod scoring;
pub mod synth;
pub mod table;

pub use attribute::{Attribute, AttributeSpec, PerAttribute, N_ATTRIBUTES};
pub use corpus::{Corpus, Schema};
pub use prompting::{BaselineVariant, PromptCondition, PromptTemplates, RenderedPrompt};
pub use scoring::AttributePrediction;
