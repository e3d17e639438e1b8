use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mhs_recon::alignment::Granularity;
use mhs_recon::inference::DecodingConfig;
use mhs_recon::reconstruction::{CvConfig, LambdaSpec, Standardization};
use mhs_recon::synth::WorldConfig;
use mhs_recon::{BaselineVariant, PromptCondition, Schema};
use serde::{Deserialize, Serialize};

use crate::Cli;

/// Fully resolved settings of one run. Written verbatim into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub condition: PromptCondition,
    pub decoding: DecodingConfig,
    /// Response cache; defaults to `<out>/cache.jsonl`.
    pub cache: Option<PathBuf>,
    /// Synthetic world file. When set, inference uses the mock backend.
    pub world: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub lambda: LambdaSpec,
    pub folds: usize,
    pub seed: u64,
    pub standardization: Standardization,
    pub granularity: Option<Granularity>,
    pub variant: Option<BaselineVariant>,
    /// Few-shot examples per class drawn from the corpus.
    pub few_shot_per_class: usize,
    pub parallelism: usize,
    pub macro_f1: bool,
    pub out: PathBuf,
    pub synth: WorldConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let cv = CvConfig::default();
        RunConfig {
            corpus: None,
            schema: None,
            condition: PromptCondition::Vanilla,
            decoding: DecodingConfig::default(),
            cache: None,
            world: None,
            templates: None,
            lambda: cv.lambda,
            folds: cv.k,
            seed: cv.seed,
            standardization: cv.standardization,
            granularity: None,
            variant: None,
            few_shot_per_class: 2,
            parallelism: 4,
            macro_f1: false,
            out: PathBuf::from("out"),
            synth: WorldConfig::default(),
        }
    }
}

pub fn parse_lambda(s: &str) -> Result<LambdaSpec> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("grid") {
        return Ok(LambdaSpec::default_grid());
    }
    let values = s
        .split(',')
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("invalid lambda `{v}`")))
        .collect::<Result<Vec<_>>>()?;
    match values.as_slice() {
        [one] => Ok(LambdaSpec::Fixed(*one)),
        _ => Ok(LambdaSpec::Grid(values)),
    }
}

impl RunConfig {
    /// Config file (if any) overlaid with command-line flags.
    pub fn resolve(cli: &Cli) -> Result<Self> {
        let mut c = match &cli.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => RunConfig::default(),
        };
        let a = &cli.args;
        if let Some(v) = &a.corpus {
            c.corpus = Some(v.clone());
        }
        if let Some(v) = &a.schema {
            c.schema = Some(v.clone());
        }
        if let Some(v) = a.condition {
            c.condition = v;
        }
        if let Some(v) = &a.endpoint {
            c.decoding.endpoint_url = v.clone();
        }
        if let Some(v) = &a.model {
            c.decoding.model_name = v.clone();
        }
        if let Some(v) = a.api_style {
            c.decoding.api_style = v;
        }
        if let Some(v) = &a.cache {
            c.cache = Some(v.clone());
        }
        if let Some(v) = &a.world {
            c.world = Some(v.clone());
        }
        if let Some(v) = &a.templates {
            c.templates = Some(v.clone());
        }
        if let Some(v) = &a.lambda {
            c.lambda = parse_lambda(v)?;
        }
        if let Some(v) = a.folds {
            c.folds = v;
        }
        if let Some(v) = a.seed {
            c.seed = v;
            c.synth.seed = v;
        }
        if let Some(v) = a.granularity {
            c.granularity = Some(v);
        }
        if let Some(v) = a.variant {
            c.variant = Some(v);
        }
        if let Some(v) = a.parallelism {
            c.parallelism = v;
        }
        if let Some(v) = a.n_comments {
            c.synth.n_comments = v;
        }
        if a.macro_f1 {
            c.macro_f1 = true;
        }
        if let Some(v) = &a.out {
            c.out = v.clone();
        }
        if !matches!(c.condition, PromptCondition::Vanilla | PromptCondition::Persona) {
            bail!("--condition must be vanilla or persona");
        }
        Ok(c)
    }

    pub fn cv(&self) -> CvConfig {
        CvConfig {
            k: self.folds,
            lambda: self.lambda.clone(),
            seed: self.seed,
            standardization: self.standardization,
            ..Default::default()
        }
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity.unwrap_or_else(|| Granularity::default_for(self.condition))
    }

    pub fn schema(&self) -> Result<Schema> {
        match &self.schema {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing schema {}", path.display()))
            }
            None => Ok(Schema::default()),
        }
    }

    pub fn cache_path(&self) -> PathBuf {
        self.cache.clone().unwrap_or_else(|| self.out.join("cache.jsonl"))
    }

    pub fn out_file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Per-condition file name, such as `predictions_vanilla.jsonl`.
    pub fn condition_file(&self, stem: &str, ext: &str) -> PathBuf {
        self.out.join(format!("{stem}_{}.{ext}", self.condition))
    }
}

pub fn require<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    path.as_deref().with_context(|| format!("{flag} is required"))
}
