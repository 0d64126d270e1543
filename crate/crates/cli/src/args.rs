use std::path::PathBuf;

use argmine::corpus::SplitName;
use argmine::inference::{ApiFlavor, ENDPOINT_ENV};
use argmine::metrics::SegmentationSource;
use argmine::pipeline::Setup;
use argmine::prompt::{PromptMode, TaskKind};
use clap::{ArgAction, Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "argmine", version, about = "Argument mining with locally hosted language models")]
pub struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG takes precedence.
    #[arg(short, long, action = ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load essays and annotations, print split sizes, write a corpus bundle.
    Ingest(IngestArgs),
    /// Run one experiment and write predictions, reports and a manifest.
    Run(RunArgs),
    /// Recompute reports from predictions files, without a model.
    Evaluate(EvaluateArgs),
    /// Run every variant of a sweep file.
    Sweep(SweepArgs),
    /// Serve the analysis endpoints and, optionally, the feedback UI.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Directory of `<essay_id>.txt` files.
    #[arg(long)]
    pub essays: PathBuf,
    /// Annotation table (discourse_id, essay_id, discourse_text, discourse_type, discourse_effectiveness).
    #[arg(long)]
    pub annotations: PathBuf,
    /// Split table (essay_id, split). Without it every essay goes to --default-split.
    #[arg(long)]
    pub splits: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub default_split: SplitName,
    /// Text-normalization service applied to every essay before span location.
    #[arg(long)]
    pub normalizer_url: Option<String>,
    /// Where to write the corpus bundle.
    #[arg(long, default_value = "corpus.json")]
    pub out: PathBuf,
}

fn parse_api(s: &str) -> Result<ApiFlavor, String> {
    match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
        "ollama" => Ok(ApiFlavor::Ollama),
        "openai" | "openai_chat" | "open_ai_chat" => Ok(ApiFlavor::OpenAiChat),
        other => Err(format!("unknown api {other:?} (expected ollama or openai)")),
    }
}

/// Experiment settings; each one overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct ExperimentFlags {
    /// Experiment name (defaults to one derived from the settings).
    #[arg(long)]
    pub name: Option<String>,
    /// segmentation, type, quality or type_and_quality.
    #[arg(long)]
    pub task: Option<TaskKind>,
    /// individual or joint; must agree with --task when both are given.
    #[arg(long)]
    pub setup: Option<Setup>,
    #[arg(long)]
    pub segmentation: Option<SegmentationSource>,
    /// few-shot or fine-tuned.
    #[arg(long)]
    pub mode: Option<PromptMode>,
    /// Shot examples, 0 to 4.
    #[arg(long)]
    pub shots: Option<usize>,
    #[arg(long)]
    pub model: Option<String>,
    /// Model server URL, or mock:gold / mock:paragraphs.
    #[arg(long, env = ENDPOINT_ENV)]
    pub endpoint: Option<String>,
    /// ollama or openai.
    #[arg(long, value_parser = parse_api)]
    pub api: Option<ApiFlavor>,
    #[arg(long)]
    pub runs: Option<usize>,
    /// Sampling seed; run r uses seed + r.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Concurrent model requests.
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long)]
    pub timeout_secs: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML file with top-level corpus/split/out keys and an [experiment] table.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Corpus bundle written by `ingest`.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Split to evaluate on (default test).
    #[arg(long)]
    pub split: Option<SplitName>,
    /// Split providing shot examples (default train).
    #[arg(long)]
    pub train_split: Option<SplitName>,
    /// Output directory (default argmine-out).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub experiment: ExperimentFlags,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Predictions files; runs of one experiment are aggregated together.
    #[arg(long, num_args = 1.., required = true)]
    pub predictions: Vec<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: SplitName,
    /// Write report files here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// TOML file with [defaults] and one [[variants]] table per experiment.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides every variant's endpoint.
    #[arg(long, env = ENDPOINT_ENV)]
    pub endpoint: Option<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// TOML file with addr, static_dir, allow_origins, corpus, shots and [[models]].
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Listen address (default 127.0.0.1:8080).
    #[arg(long)]
    pub addr: Option<String>,
    /// Served model name; replaces the configured model list together with --endpoint.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, env = ENDPOINT_ENV)]
    pub endpoint: Option<String>,
    #[arg(long, value_parser = parse_api)]
    pub api: Option<ApiFlavor>,
    /// Corpus bundle whose training split supplies shot examples.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub shots: Option<usize>,
    /// Built feedback UI to serve at /.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    /// Browser origin allowed to call the API; repeatable.
    #[arg(long = "allow-origin")]
    pub allow_origins: Vec<String>,
}
