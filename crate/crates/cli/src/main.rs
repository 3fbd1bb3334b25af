//! `rdqa` pipeline driver: classify -> build-dialogues -> infer -> report.
//!
//! Exit codes: 0 success, 2 classification failure, 3 missing
//! prerequisite, 4 backend terminal error, 1 anything else.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use rdqa_core::backend::BackendError;
use rdqa_core::dialogue::DialogueError;
use rdqa_core::taxonomy::TaxonomyError;

use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("classification failed for example '{id}': {reason}")]
    Classification { id: String, reason: String },
    #[error("missing prerequisite: {0}")]
    MissingPrerequisite(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("{0}")]
    Config(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Classification { .. } => 2,
            CliError::MissingPrerequisite(_) => 3,
            CliError::Backend(_) => 4,
            CliError::Config(_) => 1,
        }
    }

    fn classification(id: &str, error: TaxonomyError) -> CliError {
        match error {
            TaxonomyError::Backend(e) => CliError::from_backend(e),
            other => CliError::Classification { id: id.to_string(), reason: other.to_string() },
        }
    }

    fn from_backend(error: BackendError) -> CliError {
        CliError::Backend(error.to_string())
    }

    fn from_dialogue(error: DialogueError) -> CliError {
        match error {
            DialogueError::Backend(e) => CliError::from_backend(e),
            other => CliError::Config(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "rdqa",
    about = "Adapt chat-completion VLM backends to video-QA domains with reflective dialogues",
    version
)]
struct Cli {
    /// Run configuration file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the configured strategy kind: zero-shot, icl, or rd.
    #[arg(long, global = true)]
    strategy: Option<String>,

    /// Override timestamp annotation (--timestamps or --timestamps=false).
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    timestamps: Option<bool>,

    /// Rebuild dialogues even when their files already exist.
    #[arg(long, global = true)]
    force: bool,

    /// Override the configured inference concurrency.
    #[arg(long, global = true)]
    concurrency: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assign a question type to every support and test question.
    Classify,
    /// Build one reflective dialogue per (domain, question type) group.
    BuildDialogues,
    /// Answer the test set under the configured strategy.
    Infer,
    /// Score results and render the report table.
    Report {
        /// Results files to tabulate (defaults to the configured one).
        #[arg(long)]
        results: Vec<PathBuf>,
    },
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config <path> is required".to_string()))?;
    let mut config = RunConfig::load(config_path)?;
    if let Some(kind) = &cli.strategy {
        config.strategy.kind = kind.clone();
    }
    if let Some(timestamps) = cli.timestamps {
        config.strategy.with_timestamps = timestamps;
    }
    if let Some(concurrency) = cli.concurrency {
        config.concurrency = concurrency;
    }
    match &cli.command {
        Command::Classify => commands::cmd_classify(&config),
        Command::BuildDialogues => commands::cmd_build_dialogues(&config, cli.force),
        Command::Infer => commands::cmd_infer(&config),
        Command::Report { results } => commands::cmd_report(&config, results),
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(error.exit_code())
        }
    }
}
