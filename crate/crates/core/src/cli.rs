//! Command-line front end.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::pipeline::{Outcome, Pipeline, RunOptions};

/// Exit status when a stage left part of its work undone.
pub const EXIT_INCOMPLETE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "methodscan",
    version,
    about = "Extract deep-learning methodology from publications with an LLM ensemble"
)]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Run directory holding every stage's artifacts.
    #[arg(long, global = true, default_value = "workspace")]
    pub workspace: PathBuf,

    /// Directory with `*.bib` exports and `<doi>.txt` full texts.
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,

    /// Serve model calls offline from `<request_id>.txt` files in this directory.
    #[arg(long, global = true)]
    pub mock: Option<PathBuf>,

    /// Comma-separated subset of configured endpoint names.
    #[arg(long, global = true)]
    pub endpoints: Option<String>,

    /// Continue a stage that an earlier run left unfinished.
    #[arg(long, global = true)]
    pub resume: bool,

    /// Override the configured worker count.
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Parse bibliographies, dedupe by DOI and attach full texts.
    Ingest,
    /// Harvest, consolidate and curate search keywords.
    Keywords,
    /// Answer every competency question for every publication and endpoint.
    Ask,
    /// Reduce textual answers to Yes/No verdicts.
    Categorize,
    /// Majority vote across endpoints.
    Vote,
    /// Flag publications that do not develop or apply deep learning.
    Filter,
    /// Agreement and similarity tables.
    Evaluate,
    /// Energy and carbon estimate from the timing log.
    Footprint,
    /// Write every report table.
    Report,
    /// Run every stage in order.
    All,
}

/// Parse `argv` and run; returns the process exit status on success.
pub fn run<I, T>(argv: I) -> Result<i32>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| Error::InvalidInput(e.to_string()))?;
    run_cli(&cli)
}

pub fn run_cli(cli: &Cli) -> Result<i32> {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let opts = RunOptions {
        workspace: cli.workspace.clone(),
        mock: cli.mock.clone(),
        endpoints: cli.endpoints.clone(),
        resume: cli.resume,
        parallelism: cli.parallelism,
    };
    let pipeline = Pipeline::new(config, &opts)?;
    let corpus = || {
        cli.corpus
            .as_deref()
            .ok_or_else(|| Error::InvalidInput("--corpus is required for this command".into()))
    };
    let outcome = match cli.command {
        Command::Ingest => pipeline.ingest(corpus()?)?,
        Command::Keywords => pipeline.keywords()?,
        Command::Ask => pipeline.ask()?,
        Command::Categorize => pipeline.categorize()?,
        Command::Vote => pipeline.vote()?,
        Command::Filter => pipeline.filter()?,
        Command::Evaluate => pipeline.evaluate()?,
        Command::Footprint => pipeline.footprint()?,
        Command::Report => pipeline.report()?,
        Command::All => pipeline.all(corpus()?)?,
    };
    Ok(match outcome {
        Outcome::Done => 0,
        Outcome::Incomplete(n) => {
            tracing::warn!(failed = n, "stage incomplete");
            EXIT_INCOMPLETE
        }
    })
}
