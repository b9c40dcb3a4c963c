//! Subcommand implementations. Each loads and validates everything it needs
//! before the first file is written.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use erl_core::clock::{Clock, LogicalClock, SystemClock};
use erl_core::env::{load_scenarios, Environment, Scenario};
use erl_core::eval::{
    cost_report, load_trajectories, write_csv, write_json, CostReport, GuidanceMode, Harness,
    IterativeConfig, MetricsSummary, PriceTable, RewardMode, RunMatrix, Skip,
};
use erl_core::gateway::{
    Gateway, HttpBackend, HttpConfig, ScriptedBackend, StepLabel, StepTotals, UsageReport,
};
use erl_core::pool::Pool;
use erl_core::retrieval::{retrieve, Method};
use erl_core::template::Templates;

use crate::config::{require, BackendKind, GuidanceArg, RunConfig};
use crate::Failure;

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn load_environment(cfg: &RunConfig) -> Result<Environment, Failure> {
    let dir = require(&cfg.universe_dir, "universe-dir")?;
    let env = Environment::load_dir(dir).map_err(config_err)?;
    env.check_disjoint().map_err(config_err)?;
    Ok(env)
}

fn load_tasks(cfg: &RunConfig, env: &Environment) -> Result<Vec<Scenario>, Failure> {
    let path = require(&cfg.scenarios, "scenarios")?;
    let scenarios = load_scenarios(path, Some(env)).map_err(config_err)?;
    if scenarios.is_empty() {
        return Err(Failure::Config(format!("{} lists no scenarios", path.display())));
    }
    Ok(scenarios)
}

fn load_templates(cfg: &RunConfig) -> Result<Templates, Failure> {
    match &cfg.templates {
        Some(dir) => Templates::load_dir(dir).map_err(config_err),
        None => Ok(Templates::builtin()),
    }
}

/// The gateway plus the clock that stamps new heuristics. Scripted runs use a
/// logical clock so their pool files are byte-for-byte reproducible.
fn build_gateway(cfg: &RunConfig) -> Result<(Gateway, Arc<dyn Clock>), Failure> {
    match cfg.backend {
        BackendKind::Scripted => {
            let path = require(&cfg.script, "script")?;
            let backend = ScriptedBackend::from_path(path).map_err(config_err)?;
            Ok((Gateway::from_backend(backend), Arc::new(LogicalClock::default())))
        }
        BackendKind::Live => {
            let model = require(&cfg.model, "model")?;
            let mut http = HttpConfig::new(&cfg.base_url, model).with_env_key();
            if let Some(m) = &cfg.embed_model {
                http.embed_model = m.clone();
            }
            if http.api_key.is_none() {
                log::warn!("{} is not set; sending requests without a key", erl_core::gateway::API_KEY_ENV);
            }
            Ok((Gateway::from_backend(HttpBackend::new(http)), Arc::new(SystemClock)))
        }
    }
}

/// Reads a price table. `.toml` files are TOML, anything else JSON. The table
/// must price every token kind of every step, so a run never fails on a
/// missing rate after the money is spent.
fn load_prices(cfg: &RunConfig) -> Result<Option<PriceTable>, Failure> {
    let Some(path) = &cfg.prices else {
        return Ok(None);
    };
    let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let table: PriceTable = if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?
    } else {
        serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?
    };
    let every_kind = StepTotals {
        prompt_tokens: 2,
        completion_tokens: 1,
        cached_prompt_tokens: 1,
        calls: 1,
    };
    for step in StepLabel::ALL {
        table.cost(step, &every_kind).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    }
    Ok(Some(table))
}

fn load_usage(path: &Path) -> Result<UsageReport, Failure> {
    let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

fn load_pool(path: &Path) -> Result<Pool, Failure> {
    Pool::load(path).map_err(config_err)
}

fn fresh_pool_path(cfg: &RunConfig, overwrite: bool) -> Result<PathBuf, Failure> {
    let path = require(&cfg.pool, "pool")?.clone();
    if path.exists() && !overwrite {
        return Err(Failure::Config(format!(
            "{} already exists; pass --overwrite to replace it",
            path.display()
        )));
    }
    Ok(path)
}

fn harness<'a>(
    cfg: &RunConfig,
    env: &'a Environment,
    gateway: Gateway,
    clock: Arc<dyn Clock>,
    templates: Templates,
) -> Harness<'a> {
    let mut h = Harness::new(env, gateway);
    h.clock = clock;
    h.templates = templates;
    if let Some(t) = cfg.max_turns {
        h.agent.max_turns = t;
    }
    h
}

fn reward(cfg: &RunConfig) -> RewardMode {
    if cfg.no_reward {
        RewardMode::SelfAssessed
    } else {
        RewardMode::Env
    }
}

fn save_pool(pool: &Pool, path: &Path) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Backend(format!("{}: {e}", dir.display())))?;
    }
    pool.save(path).map_err(|e| Failure::Backend(e.to_string()))
}

/// Files every run writes: matrix.csv, metrics.json, usage.json, cost.json.
fn write_results(
    dir: &Path,
    matrix: &RunMatrix,
    scenarios: &[Scenario],
    avg_turns: Option<f64>,
    usage: &UsageReport,
    prices: Option<&PriceTable>,
) -> Result<(MetricsSummary, CostReport), Failure> {
    let metrics = MetricsSummary::new(matrix, scenarios, avg_turns);
    let cost = cost_report(usage, prices, avg_turns)?;
    write_csv(&dir.join("matrix.csv"), matrix)?;
    write_json(&dir.join("metrics.json"), &metrics.to_json())?;
    write_json(&dir.join("usage.json"), usage)?;
    write_json(&dir.join("cost.json"), &cost)?;
    Ok((metrics, cost))
}

fn pct(x: f64) -> String {
    format!("{:.1}%", 100.0 * x)
}

fn print_metrics(m: &MetricsSummary) {
    let k = m.runs;
    println!("{:<10} {:>9} {:>8} {:>8} {:>8}", "split", "scenarios", "SR", format!("pass@{k}"), format!("pass^{k}"));
    let rows = m
        .splits
        .iter()
        .map(|(s, x)| (s.as_str(), x))
        .chain(std::iter::once(("overall", &m.overall)));
    for (name, x) in rows {
        println!(
            "{:<10} {:>9} {:>8} {:>8} {:>8}",
            name,
            x.scenarios,
            pct(x.sr),
            pct(x.pass_at_k),
            pct(x.pass_hat_k)
        );
    }
    if let Some(t) = m.avg_turns {
        println!("average turns: {t:.1}");
    }
}

fn print_cost(c: &CostReport) {
    println!(
        "{:<16} {:>12} {:>8} {:>12} {:>6} {:>10}",
        "step", "input", "cached", "output", "calls", "cost"
    );
    for r in &c.rows {
        let cost = r.cost_usd.map(|x| format!("${x:.4}")).unwrap_or_else(|| "-".into());
        println!(
            "{:<16} {:>12} {:>7.1}% {:>12} {:>6} {:>10}",
            r.step, r.input_tokens, r.cached_pct, r.output_tokens, r.calls, cost
        );
    }
}

fn print_skips(skipped: &[Skip]) {
    for s in skipped {
        println!("skipped {} at {:?}: {}", s.scenario_id, s.stage, s.message);
    }
}

/// 3 when any task was lost to the backend, else 0.
fn skip_status(skipped: &[Skip]) -> u8 {
    if skipped.iter().any(|s| s.backend) {
        3
    } else {
        0
    }
}

pub fn accumulate(cfg: &RunConfig, overwrite: bool) -> Result<u8, Failure> {
    let pool_path = fresh_pool_path(cfg, overwrite)?;
    let env = load_environment(cfg)?;
    let scenarios = load_tasks(cfg, &env)?;
    let templates = load_templates(cfg)?;
    let prices = load_prices(cfg)?;
    let (gateway, clock) = build_gateway(cfg)?;

    let h = harness(cfg, &env, gateway, clock, templates);
    let out = h.accumulate(&scenarios, reward(cfg), Pool::new())?;

    save_pool(&out.pool, &pool_path)?;
    let dir = &cfg.output_dir;
    let (metrics, cost) = write_results(dir, &out.matrix, &scenarios, out.avg_turns, &out.usage, prices.as_ref())?;
    write_json(&dir.join("trajectories.json"), &out.trajectories)?;
    write_json(&dir.join("skipped.json"), &out.skipped)?;

    println!(
        "pool {}: {} heuristics from {} scenarios",
        pool_path.display(),
        out.pool.len(),
        scenarios.len()
    );
    print_skips(&out.skipped);
    print_metrics(&metrics);
    print_cost(&cost);
    Ok(skip_status(&out.skipped))
}

pub fn retrieve_cmd(cfg: &RunConfig, task: &str, id: &str, json: bool) -> Result<u8, Failure> {
    let path = require(&cfg.pool, "pool")?;
    let pool = load_pool(path)?;
    if pool.filter_by_outcome(cfg.retrieval.outcome_filter).is_empty() {
        return Err(Failure::Config(format!("empty pool: {} has no eligible heuristics", path.display())));
    }
    let templates = load_templates(cfg)?;
    // random selection never calls a model, so it needs no backend settings
    let gateway = if cfg.retrieval.method == Method::Random {
        Gateway::from_backend(ScriptedBackend::new())
    } else {
        build_gateway(cfg)?.0
    };
    let result = retrieve(&gateway, &templates.retrieval, task, &pool, &cfg.retrieval, id)
        .map_err(erl_core::Error::from)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&result).expect("result serializes"));
        return Ok(0);
    }
    println!("method: {} (top {} of {})", result.method_used, result.requested_k, pool.len());
    for (rank, e) in result.ranked.iter().enumerate() {
        println!("{:>3}. {:<12} {:>6.1}  {}", rank + 1, e.scenario_id, e.score, e.rationale);
    }
    Ok(0)
}

pub fn eval(cfg: &RunConfig) -> Result<u8, Failure> {
    let env = load_environment(cfg)?;
    let scenarios = load_tasks(cfg, &env)?;
    let templates = load_templates(cfg)?;
    let prices = load_prices(cfg)?;
    let prior_usage = cfg.accumulate_usage.as_deref().map(load_usage).transpose()?;
    let (mode, pool, trajectories) = match cfg.guidance {
        GuidanceArg::None => (GuidanceMode::None, Pool::new(), Vec::new()),
        GuidanceArg::Heuristics => {
            let pool = load_pool(require(&cfg.pool, "pool")?)?;
            (GuidanceMode::Heuristics, pool, Vec::new())
        }
        GuidanceArg::Fewshot => {
            let path = require(&cfg.trajectories, "trajectories")?;
            let records = load_trajectories(path).map_err(config_err)?;
            let mode = GuidanceMode::Fewshot {
                budget_tokens: cfg.fewshot_budget,
            };
            (mode, Pool::new(), records)
        }
    };
    let (gateway, clock) = build_gateway(cfg)?;

    let h = harness(cfg, &env, gateway, clock, templates);
    let run = |parallel| h.evaluate(&scenarios, mode, &pool, &trajectories, &cfg.retrieval, cfg.runs, parallel);
    let out = match cfg.parallel {
        Some(n) if n > 1 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Failure::Backend(e.to_string()))?
            .install(|| run(true))?,
        _ => run(false)?,
    };

    let usage = match &prior_usage {
        Some(prior) => prior.merge(&out.usage),
        None => out.usage.clone(),
    };
    let dir = &cfg.output_dir;
    let (metrics, cost) = write_results(dir, &out.matrix, &scenarios, out.avg_turns, &usage, prices.as_ref())?;
    write_json(&dir.join("episodes.json"), &out.episodes)?;
    write_json(&dir.join("retrievals.json"), &out.retrievals)?;

    print_metrics(&metrics);
    print_cost(&cost);
    Ok(0)
}

pub fn iterative(
    cfg: &RunConfig,
    num_batches: usize,
    batch_size: usize,
    shuffle_seed: Option<u64>,
    overwrite: bool,
) -> Result<u8, Failure> {
    let config = IterativeConfig {
        num_batches,
        batch_size,
        retrieval: cfg.retrieval.clone(),
        seed: shuffle_seed,
    };
    config.validate().map_err(config_err)?;
    let pool_path = fresh_pool_path(cfg, overwrite)?;
    let env = load_environment(cfg)?;
    let scenarios = load_tasks(cfg, &env)?;
    let templates = load_templates(cfg)?;
    let prices = load_prices(cfg)?;
    let (gateway, clock) = build_gateway(cfg)?;
    if cfg.parallel.is_some_and(|n| n > 1) {
        log::warn!("--parallel is ignored in iterative mode; tasks run in pool-growth order");
    }

    let h = harness(cfg, &env, gateway, clock, templates);
    let out = h.iterative_erl(&scenarios, &config, reward(cfg))?;

    save_pool(&out.pool, &pool_path)?;
    let dir = &cfg.output_dir;
    let (metrics, cost) = write_results(dir, &out.matrix, &scenarios, out.avg_turns, &out.usage, prices.as_ref())?;
    write_json(&dir.join("steps.json"), &out.steps)?;
    write_json(&dir.join("trajectories.json"), &out.trajectories)?;
    write_json(&dir.join("skipped.json"), &out.skipped)?;

    for s in &out.steps {
        let outcome = s.outcome.map(|o| o.as_str()).unwrap_or("skipped");
        println!(
            "batch {} {:<8} pool {:>3} guided by [{}] -> {}",
            s.batch + 1,
            s.scenario_id,
            s.pool_before.len(),
            s.retrieval.injected.join(", "),
            outcome
        );
    }
    print_skips(&out.skipped);
    print_metrics(&metrics);
    print_cost(&cost);
    Ok(skip_status(&out.skipped))
}

pub fn inspect(cfg: &RunConfig) -> Result<u8, Failure> {
    let path = require(&cfg.pool, "pool")?;
    let pool = load_pool(path)?;
    let failures = pool.entries().iter().filter(|h| !h.outcome.is_success()).count();
    println!(
        "{}: {} heuristics ({} success, {} failure)",
        path.display(),
        pool.len(),
        pool.len() - failures,
        failures
    );
    for h in pool.entries() {
        let mut trigger: String = h.guideline_trigger.chars().take(70).collect();
        if trigger.len() < h.guideline_trigger.len() {
            trigger.push_str("...");
        }
        println!("{:<12} {:<8} {:<14} {}", h.scenario_id, h.outcome.as_str(), h.outcome_source.as_str(), trigger);
    }
    Ok(0)
}
