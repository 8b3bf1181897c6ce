//! `calrec` — sequential-recommendation data pipeline CLI.
//!
//! Each subcommand wraps one pipeline stage; files are the interface between
//! stages. Exit codes: 0 success, 1 input or usage error, 2 internal error.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "calrec", version, about = "Sequential-recommendation data pipeline")]
struct Cli {
    /// TOML or JSON config supplying defaults for flags and paths.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build sequences and a truncated corpus from raw review/metadata files.
    Ingest(commands::IngestArgs),
    /// Remove consecutive duplicates, k-core filter, optionally sample users.
    Dedup(commands::DedupArgs),
    /// Leave-last-out train/val/test split.
    Split(commands::SplitArgs),
    /// Dataset statistics row for one category.
    Stats(commands::StatsArgs),
    /// Render purchase-history prompts.
    Prompt(commands::PromptArgs),
    /// Build and save the BM25 index.
    Index(commands::IndexArgs),
    /// Fetch generations from a remote completion service.
    GenClient(commands::GenClientArgs),
    /// Rank the corpus per user via quasi-round-robin BM25 retrieval.
    Retrieve(commands::RetrieveArgs),
    /// Rank via hierarchical exact attribute matching.
    Match(commands::MatchArgs),
    /// Last-item-repeater baseline rankings.
    Lir(commands::LirArgs),
    /// Tie-aware optimistic/pessimistic metrics over rankings.
    Eval(commands::EvalArgs),
    /// Contrastive and mixed training losses over embeddings.
    Loss(commands::LossArgs),
    /// Category mixture weights from user counts.
    Mixture(commands::MixtureArgs),
    /// Paired two-sided t-test over per-user score files.
    Ttest(commands::TtestArgs),
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let config = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest(args) => commands::run_ingest(&config, args),
        Command::Dedup(args) => commands::run_dedup(&config, args),
        Command::Split(args) => commands::run_split(&config, args),
        Command::Stats(args) => commands::run_stats(&config, args),
        Command::Prompt(args) => commands::run_prompt(&config, args),
        Command::Index(args) => commands::run_index(&config, args),
        Command::GenClient(args) => commands::run_gen_client(&config, args),
        Command::Retrieve(args) => commands::run_retrieve(&config, args),
        Command::Match(args) => commands::run_match(&config, args),
        Command::Lir(args) => commands::run_lir(&config, args),
        Command::Eval(args) => commands::run_eval(&config, args),
        Command::Loss(args) => commands::run_loss(&config, args),
        Command::Mixture(args) => commands::run_mixture(&config, args),
        Command::Ttest(args) => commands::run_ttest(&config, args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match catch_unwind(AssertUnwindSafe(|| dispatch(cli))) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
        Err(_) => {
            eprintln!("error: internal failure");
            ExitCode::from(2)
        }
    }
}
