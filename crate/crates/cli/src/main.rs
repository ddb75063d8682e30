mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use intentkit_core::ingest::SourceLayout;
use intentkit_core::{AblationConfig, Method};

#[derive(Parser, Debug)]
#[command(name = "intentkit", version, about = "Extract user intents from recorded UI sessions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert raw episodes into a canonical trajectory dataset.
    Ingest(IngestArgs),
    /// Run an intent extraction method over a dataset.
    Run(RunArgs),
    /// Score traces against gold intents (BiFact and Bi-NLI).
    Eval(EvalArgs),
    /// Attribute missed and spurious facts to pipeline stages.
    Funnel(EvalArgs),
    /// Cost and end-of-session latency table.
    Cost(CostArgs),
    /// Build stage-2 training pairs from a training split.
    PrepFinetune(PrepArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Global seed; all randomness derives from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Items processed concurrently.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    parallelism: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct Ablation {
    /// Keep at most this many steps per trajectory.
    #[arg(long, default_value_t = 15, value_parser = clap::value_parser!(u32).range(1..))]
    max_steps: u32,
    /// Summarize each step without its neighbours.
    #[arg(long)]
    no_context: bool,
    /// Free-form stage-1 summaries instead of labelled sections.
    #[arg(long)]
    unstructured: bool,
    /// Train on gold intents as they are.
    #[arg(long)]
    no_refine: bool,
    /// Use the prompted stage-2 backend instead of the fine-tuned one.
    #[arg(long)]
    no_finetune: bool,
}

impl Ablation {
    fn config(&self) -> AblationConfig {
        AblationConfig {
            use_context_window: !self.no_context,
            structured_summaries: !self.unstructured,
            refine_labels: !self.no_refine,
            fine_tuned_fusion: !self.no_finetune,
            max_steps: self.max_steps,
        }
    }
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// Source record layout.
    #[arg(long)]
    layout: SourceLayout,
    /// Directory with one sub-directory per episode.
    #[arg(long)]
    source: PathBuf,
    /// Backend used to clean gold labels. Labels are kept raw without it.
    #[arg(long)]
    backend_config: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Extraction method.
    #[arg(long)]
    method: Method,
    /// Trajectory JSONL; screenshots resolve relative to its directory.
    #[arg(long)]
    dataset: PathBuf,
    /// Backend config (TOML): one backend or per-role tables.
    #[arg(long)]
    backend_config: PathBuf,
    #[command(flatten)]
    ablation: Ablation,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Run directory or traces JSONL file.
    #[arg(long)]
    traces: PathBuf,
    /// Trajectory JSONL holding the gold intents.
    #[arg(long)]
    dataset: PathBuf,
    /// Judge config (TOML): [judge] backend, optional cache path and [nli].
    #[arg(long)]
    judge_config: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
#[group(id = "cost_input", required = true, multiple = false)]
struct CostInput {
    /// Run directory or traces JSONL file.
    #[arg(long, group = "cost_input")]
    traces: Option<PathBuf>,
    /// Pipeline shape file (TOML or JSON) with [[method]] rows.
    #[arg(long, group = "cost_input")]
    shape: Option<PathBuf>,
    /// The built-in token columns of the published comparison.
    #[arg(long, group = "cost_input")]
    reference: bool,
}

#[derive(Args, Debug)]
struct CostArgs {
    #[command(flatten)]
    input: CostInput,
    /// Price and latency parameters (TOML or JSON).
    #[arg(long)]
    models_config: Option<PathBuf>,
    /// Also write cost.json, cost.txt and a manifest here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PrepArgs {
    /// Trajectory JSONL of the training split.
    #[arg(long)]
    dataset: PathBuf,
    /// Backend config (TOML): one backend or per-role tables.
    #[arg(long)]
    backend_config: PathBuf,
    #[command(flatten)]
    ablation: Ablation,
    #[command(flatten)]
    common: Common,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .init();
    let cli = Cli::parse();
    let runtime = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return ExitCode::from(1);
        }
    };
    match runtime.block_on(commands::dispatch(cli.command)) {
        Ok(commands::Status::Clean) => ExitCode::SUCCESS,
        Ok(commands::Status::Partial) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<commands::UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
