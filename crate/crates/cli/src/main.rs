//! `clinreason`: command-line driver for the diagnosis pipeline.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::BackendKindArg;

#[derive(Parser, Debug)]
#[command(name = "clinreason", version, about = "Reasoning-aware diagnosis pipeline")]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides paths.output_dir.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a seeded synthetic cohort.
    Synth(SynthArgs),
    /// Fit atrophy thresholds and write patient descriptions.
    Textualize(TextualizeArgs),
    /// Render one prompt to stdout.
    Prompt(PromptArgs),
    /// Generate rationales with the gold label visible.
    Rationalize(CampaignArgs),
    /// Run a diagnosis campaign.
    Diagnose(DiagnoseArgs),
    /// Write a distillation dataset from rationalization triplets.
    ExportDistill(ExportArgs),
    /// Print the metrics table for one or more campaigns.
    Eval(EvalArgs),
    /// Sample records for clinician review.
    SampleReview(SampleReviewArgs),
    /// Start the review service (optionally creating a session first).
    ReviewServe(ReviewServeArgs),
    /// Subsample a cohort for data-efficiency runs.
    Subsample(SubsampleArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TextualizeArgs {
    #[arg(long)]
    cohort: Option<PathBuf>,
    /// Split sizes; when given, thresholds are fitted on the train part only.
    #[arg(long)]
    train: Option<usize>,
    #[arg(long)]
    valid: Option<usize>,
    #[arg(long)]
    test: Option<usize>,
    #[arg(long)]
    stratify: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: the output dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum PromptKind {
    Candidate,
    Rationalize,
    Diagnose,
}

#[derive(Args, Debug)]
struct PromptArgs {
    #[arg(long)]
    descriptions: Option<PathBuf>,
    /// Record id (default: the first record).
    #[arg(long)]
    record: Option<String>,
    #[arg(long, value_enum, default_value = "diagnose")]
    kind: PromptKind,
    #[arg(long, default_value = "cot")]
    mode: String,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long)]
    exemplars: Option<PathBuf>,
    /// Print the request JSON (with digest) instead of the text.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug, Clone)]
struct CampaignArgs {
    #[arg(long)]
    descriptions: Option<PathBuf>,
    /// Only records of this split (train, valid, test).
    #[arg(long)]
    split: Option<String>,
    #[arg(long, value_enum)]
    backend: Option<BackendKindArg>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    exemplars: Option<PathBuf>,
    #[arg(long)]
    campaign: Option<String>,
    #[arg(long)]
    max_in_flight: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    #[command(flatten)]
    common: CampaignArgs,
    #[arg(long, default_value = "cot")]
    mode: String,
    #[arg(long, default_value_t = 2)]
    k: usize,
}

#[derive(Args, Debug)]
struct ExportArgs {
    /// triplets.jsonl or a rationalization campaign directory.
    #[arg(long)]
    triplets: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "text-only")]
    modality: String,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// predictions.json files or campaign directories (default: every
    /// campaign under the output dir).
    paths: Vec<PathBuf>,
    /// Print record-lines JSON instead of the table.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct SampleReviewArgs {
    /// predictions.json files or campaign directories, one per model.
    #[arg(required = true)]
    paths: Vec<PathBuf>,
    /// Records per group, or rationales with `--misdiagnosed`.
    #[arg(long)]
    n: usize,
    /// Sample wrong (record, model) rationales from any model instead of
    /// the two agreement groups.
    #[arg(long)]
    misdiagnosed: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Attach reference rationales from a triplets file.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReviewServeArgs {
    /// Session store directory (default: <output dir>/review).
    #[arg(long)]
    store: Option<PathBuf>,
    /// Create a session from this batch before serving.
    #[arg(long)]
    batch: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    raters: Vec<String>,
    #[arg(long)]
    session_id: Option<String>,
    #[arg(long, default_value = "all-raters")]
    assignment: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: std::net::SocketAddr,
    /// Built review UI to serve at `/`.
    #[arg(long)]
    ui_dir: Option<PathBuf>,
    /// Create the session and exit.
    #[arg(long)]
    no_serve: bool,
}

#[derive(Args, Debug)]
struct SubsampleArgs {
    #[arg(long)]
    cohort: Option<PathBuf>,
    #[arg(long)]
    fraction: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    stratified: bool,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let class = e.downcast_ref::<commands::Classed>().map_or("error", |c| c.class);
            let message = format!("{e:#}").replace('\n', " ");
            eprintln!("error[{class}]: {message}");
            ExitCode::from(1)
        }
    }
}
