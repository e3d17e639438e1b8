//! The ten rated attributes, their ordinal scales and scoring rubrics.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of attributes in the registry.
pub const N_ATTRIBUTES: usize = 10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown attribute `{0}`")]
pub struct UnknownAttribute(pub String);

/// One of the ten rated facets of a comment.
///
/// The declaration order is the registry order and fixes the column order of
/// every feature vector in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Sentiment,
    Hatespeech,
    Insult,
    Humiliate,
    Dehumanize,
    Violence,
    Genocide,
    Status,
    Respect,
    AttackDefend,
}

impl Attribute {
    pub const ALL: [Attribute; N_ATTRIBUTES] = [
        Attribute::Sentiment,
        Attribute::Hatespeech,
        Attribute::Insult,
        Attribute::Humiliate,
        Attribute::Dehumanize,
        Attribute::Violence,
        Attribute::Genocide,
        Attribute::Status,
        Attribute::Respect,
        Attribute::AttackDefend,
    ];

    /// Attributes that tend to read as holistic judgments rather than
    /// explicit behaviours. These are the ones whose model scale runs
    /// opposite to the human coding.
    pub const EVALUATIVE: [Attribute; 4] = [
        Attribute::Respect,
        Attribute::Sentiment,
        Attribute::Status,
        Attribute::Hatespeech,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Sentiment => "sentiment",
            Attribute::Hatespeech => "hatespeech",
            Attribute::Insult => "insult",
            Attribute::Humiliate => "humiliate",
            Attribute::Dehumanize => "dehumanize",
            Attribute::Violence => "violence",
            Attribute::Genocide => "genocide",
            Attribute::Status => "status",
            Attribute::Respect => "respect",
            Attribute::AttackDefend => "attack_defend",
        }
    }

    pub fn is_evaluative(self) -> bool {
        Self::EVALUATIVE.contains(&self)
    }

    pub fn spec(self) -> &'static AttributeSpec {
        &REGISTRY[self.index()]
    }

    pub fn scale_max(self) -> u8 {
        self.spec().scale_max
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Attribute {
    type Err = UnknownAttribute;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace(['-', '/', ' '], "_");
        Attribute::ALL
            .into_iter()
            .find(|a| a.name() == key)
            .ok_or_else(|| UnknownAttribute(s.to_string()))
    }
}

/// Name, ordinal maximum and rubric of an attribute.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeSpec {
    pub attribute: Attribute,
    /// Labels run over `0..=scale_max`.
    pub scale_max: u8,
    pub rubric: &'static str,
}

impl AttributeSpec {
    pub fn name(&self) -> &'static str {
        self.attribute.name()
    }

    /// The decimal label tokens `"0"..="s"`.
    pub fn label_tokens(&self) -> Vec<String> {
        (0..=self.scale_max).map(|k| k.to_string()).collect()
    }

    pub fn n_labels(&self) -> usize {
        self.scale_max as usize + 1
    }
}

pub static REGISTRY: [AttributeSpec; N_ATTRIBUTES] = [
    AttributeSpec {
        attribute: Attribute::Sentiment,
        scale_max: 4,
        rubric: "Sentiment polarity: 0=strongly negative, 1=somewhat negative, 2=neutral, 3=somewhat positive, 4=strongly positive.",
    },
    AttributeSpec {
        attribute: Attribute::Hatespeech,
        scale_max: 2,
        rubric: "Presence of hate speech: 0=no, 1=unclear/neutral, 2=yes.",
    },
    AttributeSpec {
        attribute: Attribute::Insult,
        scale_max: 4,
        rubric: "Insult toward the group: 0=none, 1=mild, 2=neutral/unsure, 3=clear, 4=severe.",
    },
    AttributeSpec {
        attribute: Attribute::Humiliate,
        scale_max: 4,
        rubric: "Humiliation toward the group: 0=none, 1=mild, 2=neutral/unsure, 3=attempted humiliation, 4=degrading.",
    },
    AttributeSpec {
        attribute: Attribute::Dehumanize,
        scale_max: 4,
        rubric: "Dehumanization of the group: 0=strongly no, 1=no, 2=unclear/neutral, 3=yes, 4=strongly yes.",
    },
    AttributeSpec {
        attribute: Attribute::Violence,
        scale_max: 4,
        rubric: "Call for violence against the group: 0=strongly no, 1=no, 2=unclear/neutral, 3=yes, 4=strongly yes.",
    },
    AttributeSpec {
        attribute: Attribute::Genocide,
        scale_max: 4,
        rubric: "Call for deliberate large-scale killing of the group: 0=strongly no, 1=no, 2=unclear/neutral, 3=yes, 4=strongly yes.",
    },
    AttributeSpec {
        attribute: Attribute::Status,
        scale_max: 4,
        rubric: "Relative social status framing: 0=strongly inferior, 1=inferior, 2=equal/neutral, 3=superior, 4=strongly superior.",
    },
    AttributeSpec {
        attribute: Attribute::Respect,
        scale_max: 4,
        rubric: "Respect toward the group: 0=strongly disrespectful, 1=disrespectful/rude, 2=neutral, 3=respectful/polite, 4=strongly respectful.",
    },
    AttributeSpec {
        attribute: Attribute::AttackDefend,
        scale_max: 4,
        rubric: "Stance toward the group: 0=strongly defending, 1=defending, 2=neutral/mixed, 3=attacking, 4=strongly attacking.",
    },
];

/// A fixed-size per-attribute container indexed by [`Attribute`].
pub type PerAttribute<T> = [T; N_ATTRIBUTES];
