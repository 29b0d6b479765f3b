//! `gaisi`: command-line entry point for the exposure pipeline.
//!
//! Exit codes: 0 success, 1 usage, 2 data or config validation,
//! 3 backend failure, 4 a study expectation failed.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Backend, Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "gaisi", version, about = "Task-based generative AI exposure pipeline")]
struct Cli {
    /// Flat TOML config; flags below override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    omega: Option<f64>,
    #[arg(long, global = true, value_enum)]
    backend: Option<Backend>,
    /// Rating runs per cell.
    #[arg(long, global = true)]
    runs: Option<u32>,
    /// Exposure threshold in percent of task time saved.
    #[arg(long, global = true, value_parser = ["25", "50"])]
    threshold: Option<String>,
    /// Parallel rating requests.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus with planted effects.
    Synth,
    /// Rate every occupation-task cell.
    Rate,
    /// Average runs into cells and score workers.
    Index,
    /// Agreement across rating runs.
    Reliability,
    /// Run one study, or `all`.
    Study { name: String },
    /// Collate study results into a markdown report.
    Report,
    /// Check the effective configuration and exit.
    ValidateConfig,
}

/// A failure with its stable exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Backend(String),
    Expectation(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Backend(_) => 3,
            Failure::Expectation(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Backend(m) | Failure::Expectation(m) => m,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let over = Overrides {
        out: cli.out.clone(),
        seed: cli.seed,
        omega: cli.omega,
        backend: cli.backend,
        runs: cli.runs,
        threshold: cli.threshold.as_deref().map(|t| t.parse().expect("checked by clap")),
        jobs: cli.jobs,
    };
    match run(&cli, &over) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: &Cli, over: &Overrides) -> Result<(), Failure> {
    if let Command::Study { name } = &cli.command {
        commands::check_study_name(name)?;
    }
    let cfg = RunConfig::load(cli.config.as_deref(), over).map_err(Failure::Data)?;
    let problems = cfg.problems();
    if let Command::ValidateConfig = cli.command {
        return commands::validate_config(&cfg, problems);
    }
    if !problems.is_empty() {
        return Err(Failure::Data(format!("invalid config:\n  {}", problems.join("\n  "))));
    }
    match &cli.command {
        Command::Synth => commands::synth(&cfg),
        Command::Rate => commands::rate(&cfg),
        Command::Index => commands::index(&cfg),
        Command::Reliability => commands::reliability(&cfg),
        Command::Study { name } => commands::study(&cfg, name),
        Command::Report => commands::report(&cfg),
        Command::ValidateConfig => unreachable!("handled above"),
    }
}
