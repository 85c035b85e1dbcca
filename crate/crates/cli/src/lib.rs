//! Harness around `diffplan-core`: corpus generation, denoiser training,
//! seeded experiment runs, reports and an interactive session.
//!
//! Exit codes: 0 on success, 1 when a run fails, 2 for bad usage or an
//! invalid configuration.

pub mod commands;
pub mod config;
pub mod repl;
pub mod runlog;

use std::io::{BufRead, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use commands::{cmd_gen_corpus, cmd_report, cmd_run, cmd_train, RunArtifacts};
pub use config::{Config, Resolved};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Options {
    /// Experiment config (TOML)
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Added to the base episode seed
    #[arg(long, value_name = "INT", default_value_t = 0)]
    pub seed_offset: u64,
    /// Worker threads, overriding the config (0 = all cores)
    #[arg(long, value_name = "INT")]
    pub workers: Option<usize>,
    /// Output directory
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
}

impl Options {
    pub fn new(config: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        Self {
            config: config.into(),
            seed_offset: 0,
            workers: None,
            out: out.into(),
        }
    }

    pub fn resolve(&self) -> Result<Resolved, CliError> {
        Resolved::load(&self.config, self.seed_offset)
    }

    fn with_workers<R: Send>(&self, r: &Resolved, f: impl FnOnce() -> R + Send) -> R {
        diffplan_core::parallel::with_workers(self.workers.unwrap_or(r.config.workers), f)
    }
}

#[derive(Debug, Parser)]
#[command(name = "diffplan", version, about = "Diffusion dialogue planning experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate training corpora for the configured suites
    GenCorpus(Options),
    /// Train a denoiser per suite from the generated corpora
    Train(Options),
    /// Run every configured planner on every suite and write reports
    Run(Options),
    /// Play the user side against the first configured planner
    Repl(Options),
    /// Rebuild the reports from a run log
    Report(Options),
}

/// Parses `args` (program name first) and runs the command; returns the
/// process exit code.
pub fn main_with<I, T>(args: I, input: &mut impl BufRead, output: &mut impl Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::GenCorpus(o) => cmd_gen_corpus(o),
        Command::Train(o) => cmd_train(o),
        Command::Run(o) => cmd_run(o).map(|a| {
            print!("{}", commands::render_reports(&a.reports).0);
            println!("wrote {} and {}", a.report_text.display(), a.runlog.display());
        }),
        Command::Repl(o) => repl::run_session(o, input, output).map(|_| ()),
        Command::Report(o) => cmd_report(o).map(|_| ()),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
