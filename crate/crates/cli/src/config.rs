//! Run configuration: command-line flags layered over an optional TOML file.
//!
//! Every flag has a same-named key in the file (with underscores). Flags win.
//! Relative paths in the file are taken relative to the file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use erl_core::pool::OutcomeFilter;
use erl_core::retrieval::{Method, RetrievalConfig};
use serde::Deserialize;

use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Live,
    Scripted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Llm,
    Embedding,
    Random,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Llm => Method::Llm,
            MethodArg::Embedding => Method::Embedding,
            MethodArg::Random => Method::Random,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterArg {
    All,
    Failures,
    Successes,
}

impl From<FilterArg> for OutcomeFilter {
    fn from(f: FilterArg) -> Self {
        match f {
            FilterArg::All => OutcomeFilter::All,
            FilterArg::Failures => OutcomeFilter::FailuresOnly,
            FilterArg::Successes => OutcomeFilter::SuccessesOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GuidanceArg {
    None,
    Heuristics,
    Fewshot,
}

/// Flags shared by every subcommand. All are optional here so that a config
/// file can supply them.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunArgs {
    /// Directory of universe JSON files.
    #[arg(long, global = true)]
    pub universe_dir: Option<PathBuf>,
    /// JSON array of scenarios.
    #[arg(long, global = true)]
    pub scenarios: Option<PathBuf>,
    /// Heuristic pool (JSONL).
    #[arg(long, global = true)]
    pub pool: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendKind>,
    /// Script file for the scripted backend.
    #[arg(long, global = true)]
    pub script: Option<PathBuf>,
    /// Base URL of a chat-completions compatible API.
    #[arg(long, global = true)]
    pub base_url: Option<String>,
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[arg(long, global = true)]
    pub embed_model: Option<String>,
    /// Directory overriding the built-in prompt templates.
    #[arg(long, global = true)]
    pub templates: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub method: Option<MethodArg>,
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub outcome_filter: Option<FilterArg>,
    /// Extra ranker attempts before falling back to embeddings.
    #[arg(long, global = true)]
    pub retry_limit: Option<u32>,
    #[arg(long, global = true, value_enum)]
    pub guidance: Option<GuidanceArg>,
    /// Token budget for few-shot trajectories.
    #[arg(long, global = true)]
    pub fewshot_budget: Option<usize>,
    /// Trajectories saved by `accumulate`, for few-shot guidance.
    #[arg(long, global = true)]
    pub trajectories: Option<PathBuf>,
    #[arg(long, global = true)]
    pub runs: Option<usize>,
    /// Seed for random retrieval.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Price table (JSON or TOML), per million tokens.
    #[arg(long, global = true)]
    pub prices: Option<PathBuf>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub max_turns: Option<usize>,
    /// Evaluate this many scenarios concurrently (standard mode only).
    #[arg(long, global = true)]
    pub parallel: Option<usize>,
    /// Let the agent judge its own outcome instead of using the verifier.
    #[arg(long, global = true)]
    #[serde(default)]
    pub no_reward: bool,
    /// usage.json of an accumulation run, added to the cost report.
    #[arg(long, global = true)]
    pub accumulate_usage: Option<PathBuf>,
}

macro_rules! overlay {
    ($cli:expr, $file:expr, $($field:ident),*) => {
        RunArgs {
            $($field: $cli.$field.or($file.$field),)*
            no_reward: $cli.no_reward || $file.no_reward,
        }
    };
}

impl RunArgs {
    fn overlay(self, file: RunArgs) -> RunArgs {
        overlay!(self, file, universe_dir, scenarios, pool, backend, script, base_url, model,
            embed_model, templates, method, k, outcome_filter, retry_limit, guidance,
            fewshot_budget, trajectories, runs, seed, prices, output_dir, max_turns, parallel,
            accumulate_usage)
    }

    fn rebase(&mut self, dir: &Path) {
        let paths = [
            &mut self.universe_dir,
            &mut self.scenarios,
            &mut self.pool,
            &mut self.script,
            &mut self.templates,
            &mut self.trajectories,
            &mut self.prices,
            &mut self.output_dir,
            &mut self.accumulate_usage,
        ];
        for p in paths.into_iter().flatten() {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
    }
}

/// Fully resolved settings.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub universe_dir: Option<PathBuf>,
    pub scenarios: Option<PathBuf>,
    pub pool: Option<PathBuf>,
    pub backend: BackendKind,
    pub script: Option<PathBuf>,
    pub base_url: String,
    pub model: Option<String>,
    pub embed_model: Option<String>,
    pub templates: Option<PathBuf>,
    pub retrieval: RetrievalConfig,
    pub guidance: GuidanceArg,
    pub fewshot_budget: usize,
    pub trajectories: Option<PathBuf>,
    pub runs: usize,
    pub prices: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub max_turns: Option<usize>,
    pub parallel: Option<usize>,
    pub no_reward: bool,
    pub accumulate_usage: Option<PathBuf>,
}

pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

impl RunConfig {
    pub fn resolve(cli: RunArgs, config_file: Option<&Path>) -> Result<Self, Failure> {
        let args = match config_file {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Failure::Config(format!("reading {}: {e}", path.display())))?;
                let mut file: RunArgs = toml::from_str(&text)
                    .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
                file.rebase(path.parent().unwrap_or(Path::new(".")));
                cli.overlay(file)
            }
            None => cli,
        };

        let backend = args.backend.unwrap_or(BackendKind::Live);
        if backend == BackendKind::Scripted && args.script.is_none() {
            return Err(Failure::Config("backend scripted needs --script".into()));
        }
        if backend == BackendKind::Live && args.script.is_some() {
            return Err(Failure::Config("--script is only used with --backend scripted".into()));
        }
        let method: Method = args.method.unwrap_or(MethodArg::Llm).into();
        if args.seed.is_some() && method != Method::Random {
            return Err(Failure::Config(format!("--seed only applies to random retrieval, not {method}")));
        }
        let defaults = RetrievalConfig::default();
        let retrieval = RetrievalConfig {
            method,
            k: args.k.unwrap_or(defaults.k),
            outcome_filter: args.outcome_filter.map(Into::into).unwrap_or_default(),
            seed: args.seed,
            retry_limit: args.retry_limit.unwrap_or(defaults.retry_limit),
        };
        retrieval.validate().map_err(|e| Failure::Config(e.to_string()))?;
        let runs = args.runs.unwrap_or(1);
        if runs == 0 {
            return Err(Failure::Config("--runs must be at least 1".into()));
        }
        if args.parallel == Some(0) {
            return Err(Failure::Config("--parallel must be at least 1".into()));
        }
        let fewshot_budget = args.fewshot_budget.unwrap_or(erl_core::eval::DEFAULT_FEWSHOT_BUDGET);
        if fewshot_budget == 0 {
            return Err(Failure::Config("--fewshot-budget must be positive".into()));
        }
        Ok(Self {
            universe_dir: args.universe_dir,
            scenarios: args.scenarios,
            pool: args.pool,
            backend,
            script: args.script,
            base_url: args.base_url.unwrap_or_else(|| DEFAULT_BASE_URL.into()),
            model: args.model,
            embed_model: args.embed_model,
            templates: args.templates,
            retrieval,
            guidance: args.guidance.unwrap_or(GuidanceArg::None),
            fewshot_budget,
            trajectories: args.trajectories,
            runs,
            prices: args.prices,
            output_dir: args.output_dir.unwrap_or_else(|| PathBuf::from("results")),
            max_turns: args.max_turns,
            parallel: args.parallel,
            no_reward: args.no_reward,
            accumulate_usage: args.accumulate_usage,
        })
    }
}

/// The value of a setting the current command cannot do without.
pub fn require<'a, T>(value: &'a Option<T>, flag: &str) -> Result<&'a T, Failure> {
    value
        .as_ref()
        .ok_or_else(|| Failure::Config(format!("--{flag} is required for this command")))
}
