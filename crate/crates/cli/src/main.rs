//! `erl`: accumulate heuristics, retrieve them, and evaluate guided agents.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 backend or
//! infrastructure error (including tasks skipped because the backend failed).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{RunArgs, RunConfig};

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Backend(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Backend(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Backend(m) => write!(f, "backend error: {m}"),
        }
    }
}

impl From<erl_core::Error> for Failure {
    fn from(e: erl_core::Error) -> Self {
        use erl_core::error::EvalError;
        let infrastructure = e.is_backend() || matches!(e, erl_core::Error::Eval(EvalError::Output { .. }));
        if infrastructure {
            Failure::Backend(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

impl From<erl_core::error::EvalError> for Failure {
    fn from(e: erl_core::error::EvalError) -> Self {
        erl_core::Error::from(e).into()
    }
}

#[derive(Debug, Parser)]
#[command(name = "erl", version, about = "Tool-using agents that learn from reflected experience")]
struct Cli {
    /// TOML file with defaults for any of the flags below.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    run: RunArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Attempt each scenario once, reflect, and write a new pool.
    Accumulate {
        /// Replace an existing pool file.
        #[arg(long)]
        overwrite: bool,
    },
    /// Rank the pool for one task and print the selection.
    Retrieve {
        /// Task description to retrieve for.
        #[arg(long)]
        task: String,
        /// Session id passed to the backend (selects a scripted session).
        #[arg(long, default_value = "query")]
        id: String,
        #[arg(long)]
        json: bool,
    },
    /// Run a scenario suite with the chosen guidance and report metrics.
    #[command(alias = "run")]
    Eval,
    /// Learn while evaluating: each task retrieves from the pool built so far.
    Iterative {
        #[arg(long)]
        batches: usize,
        #[arg(long)]
        batch_size: usize,
        /// Shuffle the task order with this seed; input order otherwise.
        #[arg(long)]
        shuffle_seed: Option<u64>,
        #[arg(long)]
        overwrite: bool,
    },
    /// Summarize a pool file.
    Inspect,
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let cfg = RunConfig::resolve(cli.run, cli.config.as_deref())?;
    match cli.command {
        Command::Accumulate { overwrite } => commands::accumulate(&cfg, overwrite),
        Command::Retrieve { task, id, json } => commands::retrieve_cmd(&cfg, &task, &id, json),
        Command::Eval => commands::eval(&cfg),
        Command::Iterative {
            batches,
            batch_size,
            shuffle_seed,
            overwrite,
        } => commands::iterative(&cfg, batches, batch_size, shuffle_seed, overwrite),
        Command::Inspect => commands::inspect(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
