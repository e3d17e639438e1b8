use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use mhs_recon::alignment::{alignment_table, confidence_correlation_rows, render_alignment, write_alignment_csv, write_confidence_csv, AlignmentTable};
use mhs_recon::evaluation::{
    baseline_eval, few_shot_from_corpus, reconstruction_metrics, render_report, AblationRow, BaselineResult,
    LabelledAlignment, LabelledMetrics, RenderOptions, Report,
};
use mhs_recon::inference::{Backend, InferenceClient, MockBackend, ResponseCache};
use mhs_recon::pipeline::{annotate, consensus_lambda, run_ablations};
use mhs_recon::reconstruction::{
    collect_comment_features, fit_all, kfold_cv, write_weights_csv, AblationResult, CommentFeatures, CvResult,
    FeatureKind,
};
use mhs_recon::scoring::{read_predictions, write_predictions};
use mhs_recon::synth::{generate_world, SyntheticWorld};
use mhs_recon::{BaselineVariant, Corpus, PromptCondition, PromptTemplates};
use serde::Serialize;

use crate::config::{require, RunConfig};
use crate::{Cli, Command};

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: &'a RunConfig,
    outputs: Vec<String>,
    stats: serde_json::Value,
}

struct Run {
    config: RunConfig,
    command: Command,
    outputs: Vec<PathBuf>,
}

impl Run {
    fn create(&mut self, path: PathBuf) -> Result<BufWriter<File>> {
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        self.outputs.push(path);
        Ok(BufWriter::new(file))
    }

    fn write_json<T: Serialize>(&mut self, path: PathBuf, value: &T) -> Result<()> {
        let mut w = self.create(path)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    fn finish(mut self, stats: serde_json::Value) -> Result<()> {
        let name = match self.command {
            Command::Synth | Command::Report | Command::Baseline => format!("manifest_{}.json", self.command_name()),
            _ => format!("manifest_{}_{}.json", self.command_name(), self.config.condition),
        };
        let outputs = self.outputs.iter().map(|p| p.display().to_string()).collect();
        let manifest = Manifest {
            tool: "mhs-recon",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command_name(),
            config: &self.config,
            outputs,
            stats,
        };
        let path = self.config.out_file(&name);
        let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        serde_json::to_writer_pretty(&mut w, &manifest)?;
        writeln!(w)?;
        w.flush()?;
        self.outputs.clear();
        Ok(())
    }

    fn command_name(&self) -> &'static str {
        match self.command {
            Command::Annotate => "annotate",
            Command::Analyze => "analyze",
            Command::Reconstruct => "reconstruct",
            Command::Ablate => "ablate",
            Command::Baseline => "baseline",
            Command::Synth => "synth",
            Command::Report => "report",
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let config = RunConfig::resolve(cli)?;
    std::fs::create_dir_all(&config.out).with_context(|| format!("creating {}", config.out.display()))?;
    let mut run = Run { config, command: cli.command, outputs: Vec::new() };
    let stats = match cli.command {
        Command::Annotate => cmd_annotate(&mut run)?,
        Command::Analyze => cmd_analyze(&mut run)?,
        Command::Reconstruct => cmd_reconstruct(&mut run)?,
        Command::Ablate => cmd_ablate(&mut run)?,
        Command::Baseline => cmd_baseline(&mut run)?,
        Command::Synth => cmd_synth(&mut run)?,
        Command::Report => cmd_report(&mut run)?,
    };
    run.finish(stats)
}

fn load_corpus(config: &RunConfig) -> Result<Corpus> {
    let path = require(&config.corpus, "--corpus")?;
    let corpus = Corpus::load(path, &config.schema()?).with_context(|| format!("loading {}", path.display()))?;
    let report = corpus.report();
    if !report.rejected.is_empty() {
        log::warn!("{report}");
    }
    Ok(corpus)
}

fn templates(config: &RunConfig) -> Result<PromptTemplates> {
    Ok(match &config.templates {
        Some(dir) => PromptTemplates::load_dir(dir).with_context(|| format!("loading templates from {}", dir.display()))?,
        None => PromptTemplates::default(),
    })
}

fn client(config: &RunConfig) -> Result<InferenceClient> {
    let backend: Arc<dyn Backend> = match &config.world {
        Some(path) => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let world = SyntheticWorld::from_json(BufReader::new(file))?;
            Arc::new(MockBackend::new(Arc::new(world)))
        }
        None => Arc::new(mhs_recon::inference::HttpBackend::from_env(&config.decoding)),
    };
    let cache = ResponseCache::open(config.cache_path())
        .with_context(|| format!("opening cache {}", config.cache_path().display()))?;
    Ok(InferenceClient::new(backend, Arc::new(cache), config.decoding.clone())?)
}

fn predictions_path(config: &RunConfig) -> PathBuf {
    config.condition_file("predictions", "jsonl")
}

fn load_rows(config: &RunConfig) -> Result<(Corpus, Vec<CommentFeatures>)> {
    let corpus = load_corpus(config)?;
    let path = predictions_path(config);
    let file = File::open(&path).with_context(|| format!("opening {} (run `annotate` first)", path.display()))?;
    let predictions = read_predictions(BufReader::new(file))?;
    let rows = collect_comment_features(&predictions, &corpus, config.condition);
    if rows.is_empty() {
        bail!("no {} predictions match the corpus", config.condition);
    }
    Ok((corpus, rows))
}

fn cmd_annotate(run: &mut Run) -> Result<serde_json::Value> {
    let config = &run.config;
    let corpus = load_corpus(config)?;
    let client = client(config)?;
    let before = client.cache().len();
    let annotation = annotate(&corpus, &templates(config)?, &client, config.condition, config.parallelism)?;
    let path = predictions_path(config);
    let mut w = run.create(path)?;
    write_predictions(&mut w, &annotation.predictions)?;
    println!(
        "{} prompts, {} new requests, {} cached before, {} failed, {} skipped profiles",
        annotation.prompts,
        client.backend_calls(),
        before,
        annotation.failed,
        annotation.skipped_profiles
    );
    Ok(serde_json::json!({
        "comments": corpus.n_comments(),
        "rejected_rows": corpus.report().rejected.len(),
        "prompts": annotation.prompts,
        "failed": annotation.failed,
        "skipped_profiles": annotation.skipped_profiles,
    }))
}

fn cmd_analyze(run: &mut Run) -> Result<serde_json::Value> {
    let config = run.config.clone();
    let corpus = load_corpus(&config)?;
    let path = predictions_path(&config);
    let file = File::open(&path).with_context(|| format!("opening {} (run `annotate` first)", path.display()))?;
    let predictions = read_predictions(BufReader::new(file))?;
    let table = alignment_table(&predictions, &corpus, config.condition, config.granularity())?;
    write_alignment_csv(run.create(config.condition_file("alignment", "csv"))?, &table)?;
    write_confidence_csv(run.create(config.condition_file("confidence", "csv"))?, &confidence_correlation_rows([&table]))?;
    run.write_json(config.condition_file("alignment", "json"), &table)?;
    print!("{}", render_alignment(&[(config.condition.to_string(), &table)]));
    Ok(serde_json::json!({
        "predictions": predictions.len(),
        "skipped_attributes": table.skipped.len(),
    }))
}

fn cmd_reconstruct(run: &mut Run) -> Result<serde_json::Value> {
    let config = run.config.clone();
    let (_, rows) = load_rows(&config)?;
    let cv_config = config.cv();
    let cv = kfold_cv(&rows, FeatureKind::Weighted, &cv_config)?;
    let model = fit_all(&rows, FeatureKind::Weighted, consensus_lambda(&cv_config, &cv), cv_config.standardization)?;
    run.write_json(config.condition_file("cv", "json"), &cv)?;
    write_weights_csv(run.create(config.condition_file("weights", "csv"))?, &model)?;
    let mut w = run.create(config.condition_file("oof", "csv"))?;
    writeln!(w, "comment_id,fold,target,predicted")?;
    for o in &cv.oof {
        writeln!(w, "{},{},{},{}", o.comment_id, o.fold, o.target, o.predicted)?;
    }
    w.flush()?;
    let report = Report {
        reconstruction: vec![LabelledMetrics { label: label(config.condition), metrics: reconstruction_metrics(&cv) }],
        ..Default::default()
    };
    print!("{}", render_report(&report, RenderOptions { macro_f1: config.macro_f1 })?);
    Ok(serde_json::json!({
        "comments": rows.len(),
        "imputed_cells": cv.folds.iter().map(|f| f.imputed_cells).sum::<usize>(),
        "fold_r2": cv.folds.iter().map(|f| f.r2).collect::<Vec<_>>(),
        "fold_lambda": cv.folds.iter().map(|f| f.lambda).collect::<Vec<_>>(),
    }))
}

fn cmd_ablate(run: &mut Run) -> Result<serde_json::Value> {
    let config = run.config.clone();
    let (_, rows) = load_rows(&config)?;
    let results = run_ablations(&rows, &config.cv())?;
    run.write_json(config.condition_file("ablation", "json"), &results)?;
    let report = Report { ablation: results.iter().map(AblationRow::from).collect(), ..Default::default() };
    print!("{}", render_report(&report, RenderOptions::default())?);
    Ok(serde_json::json!({ "comments": rows.len() }))
}

fn cmd_baseline(run: &mut Run) -> Result<serde_json::Value> {
    let config = run.config.clone();
    let corpus = load_corpus(&config)?;
    let mut t = templates(&config)?;
    if t.baseline.few_shot_examples.is_empty() {
        t.baseline.few_shot_examples = few_shot_from_corpus(&corpus, config.few_shot_per_class);
    }
    let client = client(&config)?;
    let variants: Vec<BaselineVariant> = match config.variant {
        Some(v) => vec![v],
        None => BaselineVariant::ALL.to_vec(),
    };
    let mut results = Vec::new();
    for v in variants {
        let r = baseline_eval(v, &corpus, &t, &client, config.parallelism)?;
        run.write_json(config.out_file(&format!("baseline_{v}.json")), &r)?;
        results.push(r);
    }
    let report = Report { baselines: results.clone(), ..Default::default() };
    print!("{}", render_report(&report, RenderOptions { macro_f1: config.macro_f1 })?);
    Ok(serde_json::json!({
        "unparsed": results.iter().map(|r| (r.variant.name(), r.unparsed)).collect::<std::collections::BTreeMap<_, _>>(),
        "failed": results.iter().map(|r| (r.variant.name(), r.failed)).collect::<std::collections::BTreeMap<_, _>>(),
    }))
}

fn cmd_synth(run: &mut Run) -> Result<serde_json::Value> {
    let config = run.config.clone();
    let world = generate_world(&config.synth)?;
    let corpus_path = config.corpus.clone().unwrap_or_else(|| config.out_file("corpus.csv"));
    world.write_corpus(run.create(corpus_path.clone())?, &config.schema()?)?;
    let world_path = config.world.clone().unwrap_or_else(|| config.out_file("world.json"));
    let mut w = run.create(world_path.clone())?;
    world.to_json(&mut w)?;
    w.flush()?;
    println!(
        "{} comments, {} annotators -> {}, {}",
        world.comments.len(),
        world.annotators.len(),
        corpus_path.display(),
        world_path.display()
    );
    Ok(serde_json::json!({ "comments": world.comments.len(), "annotators": world.annotators.len() }))
}

fn label(condition: PromptCondition) -> String {
    match condition {
        PromptCondition::Vanilla => "Vanilla".into(),
        PromptCondition::Persona => "Persona".into(),
        other => other.to_string(),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Option<T>> {
    if !path.exists() {
        return Ok(None);
    }
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(Some(serde_json::from_reader(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))?))
}

fn cmd_report(run: &mut Run) -> Result<serde_json::Value> {
    let config = run.config.clone();
    let mut report = Report::default();
    for condition in [PromptCondition::Vanilla, PromptCondition::Persona] {
        let file = |stem: &str| config.out_file(&format!("{stem}_{condition}.json"));
        if let Some(table) = read_json::<AlignmentTable>(&file("alignment"))? {
            report.alignment.push(LabelledAlignment { label: label(condition), table });
        }
        if let Some(cv) = read_json::<CvResult>(&file("cv"))? {
            report.reconstruction.push(LabelledMetrics { label: label(condition), metrics: reconstruction_metrics(&cv) });
        }
        if condition == config.condition {
            if let Some(results) = read_json::<Vec<AblationResult>>(&file("ablation"))? {
                report.ablation = results.iter().map(AblationRow::from).collect();
            }
        }
    }
    for v in BaselineVariant::ALL {
        if let Some(r) = read_json::<BaselineResult>(&config.out_file(&format!("baseline_{v}.json")))? {
            report.baselines.push(r);
        }
    }
    if report.n_sections() == 0 {
        bail!("no stage outputs found in {}", config.out.display());
    }
    let text = render_report(&report, RenderOptions { macro_f1: config.macro_f1 })?;
    run.create(config.out_file("report.txt"))?.write_all(text.as_bytes())?;
    let mut w = run.create(config.out_file("report.json"))?;
    report.to_json(&mut w)?;
    w.flush()?;
    print!("{text}");
    Ok(serde_json::json!({ "sections": report.n_sections() }))
}
