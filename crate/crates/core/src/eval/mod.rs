//! Experiment orchestration: building a pool, evaluating with or without
//! guidance, the iterative variant, and the numbers reported for each.
//!
//! A [`Harness`] bundles the environment, gateway and templates. Each phase
//! runs on a fresh usage ledger and returns its own [`UsageReport`].

mod cost;
mod metrics;
mod output;

use std::collections::HashSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{
    render_fewshot_block, run_episode, AgentConfig, GuidancePayload, Trajectory, TrajectoryRecord,
    DEFAULT_OBSERVATION_BUDGET,
};
use crate::clock::{Clock, SystemClock};
use crate::env::{Environment, Scenario};
use crate::error::{Error, EvalError};
use crate::gateway::{Gateway, UsageReport};
use crate::pool::{Outcome, OutcomeSource, Pool};
use crate::reflection::{infer_outcome, reflect, Experience};
use crate::retrieval::{rank_texts, retrieve, Method, RetrievalConfig, RetrievalResult};
use crate::template::Templates;

pub use cost::{cost_report, CostReport, CostRow, PriceTable, Rates};
pub use metrics::{MetricsSummary, RunMatrix, SplitMetrics};
pub use output::{load_trajectories, save_trajectories, write_csv, write_json};

/// Where the outcome used for reflection comes from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// The environment's verifier.
    #[default]
    Env,
    /// The agent's own judgement; the verifier is still used for metrics.
    SelfAssessed,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceMode {
    #[default]
    None,
    Heuristics,
    /// Raw trajectories chosen by embedding similarity, within a token budget.
    Fewshot {
        budget_tokens: usize,
    },
}

pub const DEFAULT_FEWSHOT_BUDGET: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Rollout,
    SelfAssessment,
    Reflection,
    Append,
}

/// A scenario dropped from a learning phase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skip {
    pub scenario_id: String,
    pub stage: Stage,
    pub message: String,
    /// The cause was the model backend rather than its output.
    pub backend: bool,
}

/// One finished evaluation episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub scenario_id: String,
    pub run: usize,
    pub outcome: Outcome,
    pub turn_count: usize,
    pub trajectory: Trajectory,
}

/// What retrieval saw and chose for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalLogEntry {
    pub scenario_id: String,
    /// Candidate ids after outcome filtering, in pool order.
    pub candidates: Vec<String>,
    /// Ids placed in the prompt, in order.
    pub injected: Vec<String>,
    pub method_used: Option<Method>,
    pub result: Option<RetrievalResult>,
}

#[derive(Debug, Clone)]
pub struct AccumulateOutput {
    pub pool: Pool,
    /// Verifier outcomes of the single attempt per scenario.
    pub matrix: RunMatrix,
    pub trajectories: Vec<TrajectoryRecord>,
    pub skipped: Vec<Skip>,
    pub usage: UsageReport,
    pub avg_turns: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct EvalOutput {
    pub matrix: RunMatrix,
    pub episodes: Vec<EpisodeSummary>,
    pub retrievals: Vec<RetrievalLogEntry>,
    pub usage: UsageReport,
    pub avg_turns: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterativeConfig {
    pub num_batches: usize,
    pub batch_size: usize,
    pub retrieval: RetrievalConfig,
    /// Shuffles the task order when set; otherwise input order is kept.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl IterativeConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.num_batches == 0 || self.batch_size == 0 {
            return Err(EvalError::InvalidConfig(
                "num_batches and batch_size must both be at least 1".into(),
            ));
        }
        self.retrieval.validate().map_err(EvalError::Retrieval)
    }
}

/// One task of an iterative run, as seen by retrieval and the pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationStep {
    pub batch: usize,
    pub scenario_id: String,
    /// Pool ids at retrieval time.
    pub pool_before: Vec<String>,
    pub retrieval: RetrievalLogEntry,
    pub outcome: Option<Outcome>,
    pub added: bool,
}

#[derive(Debug, Clone)]
pub struct IterativeOutput {
    pub pool: Pool,
    pub matrix: RunMatrix,
    pub steps: Vec<IterationStep>,
    pub trajectories: Vec<TrajectoryRecord>,
    pub skipped: Vec<Skip>,
    pub usage: UsageReport,
    pub avg_turns: Option<f64>,
}

/// Environment, model access and prompts for one experiment.
pub struct Harness<'a> {
    pub env: &'a Environment,
    pub gateway: Gateway,
    pub templates: Templates,
    pub agent: AgentConfig,
    pub observation_budget: usize,
    pub clock: Arc<dyn Clock>,
}

fn mean_turns(turns: &[usize]) -> Option<f64> {
    (!turns.is_empty()).then(|| turns.iter().sum::<usize>() as f64 / turns.len() as f64)
}

fn check_scenarios(env: &Environment, scenarios: &[Scenario]) -> Result<(), Error> {
    let mut seen = HashSet::new();
    for s in scenarios {
        env.universe(&s.universe_id)?;
        if !seen.insert(s.scenario_id.as_str()) {
            return Err(EvalError::InvalidConfig(format!("scenario {} listed twice", s.scenario_id)).into());
        }
    }
    Ok(())
}

/// What one learning step produced.
struct Learned {
    outcome: Option<Outcome>,
    added: bool,
    turns: Option<usize>,
    record: Option<TrajectoryRecord>,
    skip: Option<Skip>,
}

impl<'a> Harness<'a> {
    pub fn new(env: &'a Environment, gateway: Gateway) -> Self {
        Self {
            env,
            gateway,
            templates: Templates::builtin(),
            agent: AgentConfig::default(),
            observation_budget: DEFAULT_OBSERVATION_BUDGET,
            clock: Arc::new(SystemClock),
        }
    }

    /// Runs, scores, reflects on and stores one task.
    fn learn_one(
        &self,
        gw: &Gateway,
        scenario: &Scenario,
        guidance: &GuidancePayload,
        reward: RewardMode,
        pool: &mut Pool,
    ) -> Result<Learned, Error> {
        let id = &scenario.scenario_id;
        let skip = |stage: Stage, e: &dyn std::fmt::Display, backend: bool| {
            log::warn!("skipping {id} at {stage:?}: {e}");
            Skip {
                scenario_id: id.clone(),
                stage,
                message: e.to_string(),
                backend,
            }
        };
        let mut learned = Learned {
            outcome: None,
            added: false,
            turns: None,
            record: None,
            skip: None,
        };
        let universe = self.env.universe(&scenario.universe_id)?;
        let episode = match run_episode(
            gw,
            &self.templates.system_prompt,
            guidance,
            scenario,
            universe,
            &self.agent,
            0,
        ) {
            Ok(ep) => ep,
            Err(e) => {
                learned.skip = Some(skip(Stage::Rollout, &e, true));
                return Ok(learned);
            }
        };
        learned.outcome = Some(episode.outcome);
        learned.turns = Some(episode.trajectory.turn_count);
        learned.record = Some(TrajectoryRecord {
            scenario_id: id.clone(),
            task: scenario.task.clone(),
            outcome: episode.outcome,
            trajectory: episode.trajectory.clone(),
        });

        let (outcome, source) = match reward {
            RewardMode::Env => (episode.outcome, OutcomeSource::EnvReward),
            RewardMode::SelfAssessed => {
                let text = episode.trajectory.render(self.observation_budget);
                match infer_outcome(gw, &self.templates.self_assessment, id, &scenario.task, &text) {
                    Ok(o) => (o, OutcomeSource::SelfAssessed),
                    Err(e) => {
                        let msg = e.to_string();
                        let backend = Error::from(e).is_backend();
                        learned.skip = Some(skip(Stage::SelfAssessment, &msg, backend));
                        return Ok(learned);
                    }
                }
            }
        };
        let experience = Experience {
            scenario_id: id.clone(),
            task: scenario.task.clone(),
            trajectory: episode.trajectory,
            outcome,
            outcome_source: source,
        };
        let heuristic = match reflect(
            gw,
            &self.templates.generation,
            &experience,
            self.observation_budget,
            self.clock.as_ref(),
        ) {
            Ok(h) => h,
            Err(e) => {
                let msg = e.to_string();
                let backend = Error::from(e).is_backend();
                learned.skip = Some(skip(Stage::Reflection, &msg, backend));
                return Ok(learned);
            }
        };
        match pool.append(heuristic) {
            Ok(()) => learned.added = true,
            Err(e) => learned.skip = Some(skip(Stage::Append, &e, false)),
        }
        Ok(learned)
    }

    /// One unguided attempt per scenario, each reflected on and added to
    /// `pool`. Scenarios that fail along the way are skipped and reported.
    pub fn accumulate(
        &self,
        scenarios: &[Scenario],
        reward: RewardMode,
        mut pool: Pool,
    ) -> Result<AccumulateOutput, Error> {
        check_scenarios(self.env, scenarios)?;
        let gw = self.gateway.with_fresh_ledger();
        let mut matrix = RunMatrix::new(1);
        let mut trajectories = Vec::new();
        let mut skipped = Vec::new();
        let mut turns = Vec::new();
        for scenario in scenarios {
            let l = self.learn_one(&gw, scenario, &GuidancePayload::none(), reward, &mut pool)?;
            if let Some(o) = l.outcome {
                matrix.push_row(scenario.scenario_id.clone(), vec![o])?;
            }
            turns.extend(l.turns);
            trajectories.extend(l.record);
            skipped.extend(l.skip);
        }
        log::info!(
            "accumulated {} heuristics from {} scenarios ({} skipped)",
            pool.len(),
            scenarios.len(),
            skipped.len()
        );
        Ok(AccumulateOutput {
            pool,
            matrix,
            trajectories,
            skipped,
            usage: gw.ledger().report(),
            avg_turns: mean_turns(&turns),
        })
    }

    /// Builds the guidance for one task.
    fn guidance_for(
        &self,
        gw: &Gateway,
        scenario: &Scenario,
        mode: GuidanceMode,
        pool: &Pool,
        trajectories: &[TrajectoryRecord],
        config: &RetrievalConfig,
    ) -> Result<(GuidancePayload, RetrievalLogEntry), Error> {
        let mut entry = RetrievalLogEntry {
            scenario_id: scenario.scenario_id.clone(),
            candidates: Vec::new(),
            injected: Vec::new(),
            method_used: None,
            result: None,
        };
        let payload = match mode {
            GuidanceMode::None => GuidancePayload::none(),
            GuidanceMode::Heuristics => {
                let filtered = pool.filter_by_outcome(config.outcome_filter);
                entry.candidates = filtered.entries().iter().map(|h| h.scenario_id.clone()).collect();
                let result = retrieve(
                    gw,
                    &self.templates.retrieval,
                    &scenario.task,
                    pool,
                    config,
                    &scenario.scenario_id,
                )?;
                let payload = GuidancePayload::heuristics(result.heuristics(pool));
                if !entry.candidates.is_empty() {
                    entry.method_used = Some(result.method_used);
                }
                entry.result = Some(result);
                payload
            }
            GuidanceMode::Fewshot { budget_tokens } => {
                let candidates: Vec<&TrajectoryRecord> = trajectories
                    .iter()
                    .filter(|r| config.outcome_filter.admits(r.outcome))
                    .collect();
                entry.candidates = candidates.iter().map(|r| r.scenario_id.clone()).collect();
                let tasks: Vec<String> = candidates.iter().map(|r| r.task.clone()).collect();
                let ranked = rank_texts(gw, &scenario.task, &tasks, config.k).map_err(EvalError::from)?;
                let chosen: Vec<TrajectoryRecord> =
                    ranked.iter().map(|(i, _)| candidates[*i].clone()).collect();
                if !chosen.is_empty() {
                    entry.method_used = Some(Method::Embedding);
                }
                render_fewshot_block(&chosen, budget_tokens)
            }
        };
        entry.injected = payload.source_ids.clone();
        Ok((payload, entry))
    }

    #[allow(clippy::too_many_arguments)]
    fn evaluate_one(
        &self,
        gw: &Gateway,
        scenario: &Scenario,
        mode: GuidanceMode,
        pool: &Pool,
        trajectories: &[TrajectoryRecord],
        config: &RetrievalConfig,
        runs: usize,
    ) -> Result<(Vec<EpisodeSummary>, RetrievalLogEntry), Error> {
        let universe = self.env.universe(&scenario.universe_id)?;
        let (guidance, entry) = self.guidance_for(gw, scenario, mode, pool, trajectories, config)?;
        let mut episodes = Vec::with_capacity(runs);
        for run in 0..runs {
            let ep = run_episode(
                gw,
                &self.templates.system_prompt,
                &guidance,
                scenario,
                universe,
                &self.agent,
                run,
            )?;
            episodes.push(EpisodeSummary {
                scenario_id: scenario.scenario_id.clone(),
                run,
                outcome: ep.outcome,
                turn_count: ep.trajectory.turn_count,
                trajectory: ep.trajectory,
            });
        }
        Ok((episodes, entry))
    }

    /// Retrieves once per scenario, then runs it `runs` times with that
    /// guidance. Only infrastructure problems are errors; failed episodes are
    /// data.
    #[allow(clippy::too_many_arguments)]
    pub fn evaluate(
        &self,
        scenarios: &[Scenario],
        mode: GuidanceMode,
        pool: &Pool,
        trajectories: &[TrajectoryRecord],
        config: &RetrievalConfig,
        runs: usize,
        parallel: bool,
    ) -> Result<EvalOutput, Error> {
        if runs == 0 {
            return Err(EvalError::InvalidConfig("runs must be at least 1".into()).into());
        }
        if mode != GuidanceMode::None {
            config.validate().map_err(EvalError::from)?;
        }
        if let GuidanceMode::Fewshot { budget_tokens: 0 } = mode {
            return Err(EvalError::InvalidConfig("few-shot budget must be positive".into()).into());
        }
        check_scenarios(self.env, scenarios)?;
        let gw = self.gateway.with_fresh_ledger();
        let one = |s: &Scenario| self.evaluate_one(&gw, s, mode, pool, trajectories, config, runs);
        let results: Vec<(Vec<EpisodeSummary>, RetrievalLogEntry)> = if parallel {
            scenarios.par_iter().map(one).collect::<Result<_, _>>()?
        } else {
            scenarios.iter().map(one).collect::<Result<_, _>>()?
        };
        let mut matrix = RunMatrix::new(runs);
        let mut episodes = Vec::new();
        let mut retrievals = Vec::new();
        for (eps, entry) in results {
            matrix.push_row(
                entry.scenario_id.clone(),
                eps.iter().map(|e| e.outcome).collect(),
            )?;
            episodes.extend(eps);
            retrievals.push(entry);
        }
        let turns: Vec<usize> = episodes.iter().map(|e| e.turn_count).collect();
        Ok(EvalOutput {
            matrix,
            episodes,
            retrievals,
            usage: gw.ledger().report(),
            avg_turns: mean_turns(&turns),
        })
    }

    /// The iterative variant: tasks are processed in `num_batches` batches of
    /// `batch_size`, and each retrieves from the pool as it stands before its
    /// own attempt, so a task never sees its own heuristic.
    pub fn iterative_erl(
        &self,
        scenarios: &[Scenario],
        config: &IterativeConfig,
        reward: RewardMode,
    ) -> Result<IterativeOutput, Error> {
        config.validate()?;
        check_scenarios(self.env, scenarios)?;
        let mut order: Vec<&Scenario> = scenarios.iter().collect();
        if let Some(seed) = config.seed {
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        }
        let capacity = config.num_batches.saturating_mul(config.batch_size);
        if capacity < order.len() {
            log::warn!(
                "{} batches of {} cover only {} of {} scenarios",
                config.num_batches,
                config.batch_size,
                capacity,
                order.len()
            );
            order.truncate(capacity);
        }

        let gw = self.gateway.with_fresh_ledger();
        let mut pool = Pool::new();
        let mut matrix = RunMatrix::new(1);
        let mut steps = Vec::new();
        let mut trajectories = Vec::new();
        let mut skipped = Vec::new();
        let mut turns = Vec::new();
        for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
            for scenario in chunk {
                let pool_before: Vec<String> =
                    pool.entries().iter().map(|h| h.scenario_id.clone()).collect();
                let (guidance, retrieval) = self.guidance_for(
                    &gw,
                    scenario,
                    GuidanceMode::Heuristics,
                    &pool,
                    &[],
                    &config.retrieval,
                )?;
                let l = self.learn_one(&gw, scenario, &guidance, reward, &mut pool)?;
                if let Some(o) = l.outcome {
                    matrix.push_row(scenario.scenario_id.clone(), vec![o])?;
                }
                turns.extend(l.turns);
                trajectories.extend(l.record);
                skipped.extend(l.skip);
                steps.push(IterationStep {
                    batch,
                    scenario_id: scenario.scenario_id.clone(),
                    pool_before,
                    retrieval,
                    outcome: l.outcome,
                    added: l.added,
                });
            }
            log::info!("batch {} done, pool size {}", batch + 1, pool.len());
        }
        Ok(IterativeOutput {
            pool,
            matrix,
            steps,
            trajectories,
            skipped,
            usage: gw.ledger().report(),
            avg_turns: mean_turns(&turns),
        })
    }
}
