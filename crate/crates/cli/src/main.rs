mod checkpoint;
mod commands;
mod manifest;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Exit statuses.
const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "featproto", version, about = "Prototype-library survival prediction")]
#[command(after_help = "Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric failure.\n\
Set FEATPROTO_LOG (error, warn, info, debug) for log output on stderr.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic survival dataset.
    Synth(SynthArgs),
    /// Train an encoder and prototype library.
    Train(TrainArgs),
    /// Score a dataset: C-index, risk groups, Kaplan-Meier and log-rank.
    Eval(EvalArgs),
    /// Write one explanation trace per sample.
    Explain(ExplainArgs),
    /// Write the prototype coordinate table.
    Export(ExportArgs),
    /// Rebuild a library file from an exported table.
    Import(ImportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator spec (TOML); defaults apply to missing keys.
    #[arg(long, alias = "config")]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Samples per class in train.tsv (the rest go to validation.tsv).
    #[arg(long)]
    pub train_per_class: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset file, or a directory holding train.tsv / validation.tsv
    /// (dataset.tsv with --folds).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub validation: Option<PathBuf>,
    /// Run configuration with [engine] and [train] tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Repeated seeded 8:2 splits of the data.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Ablation variant, or `all` for the comparison table.
    #[arg(long)]
    pub ablation: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Treat the concatenated modality blocks as already-fused features.
    #[arg(long)]
    pub fused: bool,
    /// Sources reported per nearest prototype.
    #[arg(long)]
    pub top_f: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Bad flag combinations detected after parsing.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<featproto::Error>() {
            return match e {
                featproto::Error::Diverged { .. } | featproto::Error::NonFinite(_) => EXIT_NUMERIC,
                _ => EXIT_DATA,
            };
        }
    }
    EXIT_DATA
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FEATPROTO_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Explain(a) => commands::explain(&a),
        Command::Export(a) => commands::export(&a),
        Command::Import(a) => commands::import(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
