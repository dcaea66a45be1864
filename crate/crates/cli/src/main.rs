//! `pace`: run, score and report actor-critic prompt editing experiments.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pace_core::{ErrorKind, SplitKind};

#[derive(Debug, Parser)]
#[command(name = "pace", version, about = "Actor-critic prompt editing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimize a starting prompt and write a run directory.
    Optimize(OptimizeArgs),
    /// Score one prompt on a split.
    Eval(EvalArgs),
    /// Apply keyboard-adjacent misspellings to text.
    Perturb(PerturbArgs),
    /// Tabulate completed run directories.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct BackendArgs {
    /// JSON file with `run`, `backend` and optional `templates` sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the backend kind: live, replay or mock.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    mock_script: Option<PathBuf>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct OptimizeArgs {
    #[arg(long)]
    task: PathBuf,
    /// best, medium, worst, butter_fingers or empty.
    #[arg(long, conflicts_with = "prompt", required_unless_present = "prompt")]
    setting: Option<String>,
    /// Literal starting prompt.
    #[arg(long)]
    prompt: Option<String>,
    /// full, no_critic or no_actor_critic.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    task: PathBuf,
    #[arg(long, conflicts_with = "prompt_file", required_unless_present = "prompt_file")]
    prompt: Option<String>,
    #[arg(long)]
    prompt_file: Option<PathBuf>,
    #[arg(long, default_value = "val")]
    split: SplitKind,
    /// Print the full report as JSON.
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Debug, Args)]
struct PerturbArgs {
    /// Text to perturb; reads --file or stdin when absent.
    text: Option<String>,
    #[arg(long, conflicts_with = "text")]
    file: Option<PathBuf>,
    #[arg(long, default_value_t = pace_core::harness::perturb::DEFAULT_RATE)]
    rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// markdown, csv or json.
    #[arg(long, default_value = "markdown")]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Backend => 4,
        ErrorKind::Internal => 5,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Optimize(a) => commands::optimize(a),
        Command::Eval(a) => commands::eval(a),
        Command::Perturb(a) => commands::perturb(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
