//! `mhs-recon`: attribute annotation, alignment, score reconstruction,
//! ablations, baselines and synthetic data from the command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mhs_recon::alignment::Granularity;
use mhs_recon::inference::ApiStyle;
use mhs_recon::{BaselineVariant, PromptCondition};

#[derive(Debug, Parser)]
#[command(name = "mhs-recon", version, about = "Reconstruct hate-speech scores from attribute-level LLM ratings")]
pub struct Cli {
    /// TOML run configuration; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Repeat for more log output on stderr.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(flatten)]
    pub args: RunArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    /// TOML file mapping logical fields to column names.
    #[arg(long, global = true)]
    pub schema: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_condition)]
    pub condition: Option<PromptCondition>,
    #[arg(long, global = true)]
    pub endpoint: Option<String>,
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[arg(long, global = true, value_parser = parse_api_style)]
    pub api_style: Option<ApiStyle>,
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,
    /// Answer prompts from this synthetic world instead of an endpoint.
    #[arg(long, global = true)]
    pub world: Option<PathBuf>,
    /// Directory of template overrides (`system.txt`, `attribute.txt`, ...).
    #[arg(long, global = true)]
    pub templates: Option<PathBuf>,
    /// A number, a comma-separated grid, or `grid` for the default grid.
    #[arg(long, global = true)]
    pub lambda: Option<String>,
    #[arg(long, global = true)]
    pub folds: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_parser = parse_granularity)]
    pub granularity: Option<Granularity>,
    #[arg(long, global = true, value_parser = parse_variant)]
    pub variant: Option<BaselineVariant>,
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    /// Number of synthetic comments.
    #[arg(long, global = true)]
    pub n_comments: Option<usize>,
    /// Report macro F1 instead of positive-class F1.
    #[arg(long, global = true)]
    pub macro_f1: bool,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Predict every attribute for every comment.
    Annotate,
    /// Spearman alignment between predictions and human ratings.
    Analyze,
    /// Cross-validated ridge reconstruction of the hate score.
    Reconstruct,
    /// Compare the four reconstruction formulas.
    Ablate,
    /// Direct hate/non-hate prompting baselines.
    Baseline,
    /// Generate a synthetic world and its corpus.
    Synth,
    /// Assemble a report from the stage outputs in `--out`.
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
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

fn parse_condition(s: &str) -> Result<PromptCondition, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_variant(s: &str) -> Result<BaselineVariant, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_granularity(s: &str) -> Result<Granularity, String> {
    match s.replace('-', "_").as_str() {
        "per_annotator" => Ok(Granularity::PerAnnotator),
        "comment_mean" => Ok(Granularity::CommentMean),
        _ => Err(format!("unknown granularity `{s}` (per_annotator, comment_mean)")),
    }
}

fn parse_api_style(s: &str) -> Result<ApiStyle, String> {
    match s {
        "completion" => Ok(ApiStyle::Completion),
        "chat" => Ok(ApiStyle::Chat),
        _ => Err(format!("unknown api style `{s}` (completion, chat)")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({
                "level": "error",
                "command": cli.command.name(),
                "message": format!("{e:#}"),
            });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
