//! Choosing the top-k heuristics for a new task.
//!
//! Three methods are available. `llm` asks a ranking model to score the pool
//! with the retrieval prompt and falls back to `embedding` when the reply
//! cannot be parsed after the configured retries. `embedding` ranks by cosine
//! similarity between the new task and each stored task. `random` draws a
//! seeded uniform sample and exists as a control.

mod ranker;

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::RetrievalError;
use crate::gateway::{ChatMessage, ChatParams, Gateway, StepLabel};
use crate::pool::{Heuristic, OutcomeFilter, Pool};
use crate::template::Template;

pub use ranker::parse_ranker_response;

pub const DEFAULT_K: usize = 20;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Llm,
    Embedding,
    Random,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Llm => "llm",
            Method::Embedding => "embedding",
            Method::Random => "random",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalConfig {
    pub method: Method,
    pub k: usize,
    #[serde(default)]
    pub outcome_filter: OutcomeFilter,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_retry_limit")]
    pub retry_limit: u32,
}

fn default_retry_limit() -> u32 {
    1
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            method: Method::Llm,
            k: DEFAULT_K,
            outcome_filter: OutcomeFilter::All,
            seed: None,
            retry_limit: default_retry_limit(),
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.k == 0 {
            return Err(RetrievalError::InvalidConfig("k must be at least 1".into()));
        }
        match (self.method, self.seed) {
            (Method::Random, None) => Err(RetrievalError::InvalidConfig(
                "random retrieval needs a seed".into(),
            )),
            (Method::Llm | Method::Embedding, Some(_)) => Err(RetrievalError::InvalidConfig(format!(
                "seed is only meaningful for random retrieval, not {}",
                self.method
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub scenario_id: String,
    pub score: f64,
    #[serde(default)]
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub ranked: Vec<RankedEntry>,
    pub method_used: Method,
    pub requested_k: usize,
}

impl RetrievalResult {
    pub fn ids(&self) -> Vec<&str> {
        self.ranked.iter().map(|e| e.scenario_id.as_str()).collect()
    }

    /// Checks ids are distinct members of `pool`, the size bound, and the
    /// score range for the method used.
    pub fn check(&self, pool: &[Heuristic]) -> Result<(), String> {
        if self.ranked.len() > self.requested_k.min(pool.len()) {
            return Err(format!(
                "{} entries for k={} over a pool of {}",
                self.ranked.len(),
                self.requested_k,
                pool.len()
            ));
        }
        let mut seen = HashSet::new();
        for e in &self.ranked {
            if !pool.iter().any(|h| h.scenario_id == e.scenario_id) {
                return Err(format!("{} is not in the pool", e.scenario_id));
            }
            if !seen.insert(e.scenario_id.as_str()) {
                return Err(format!("{} appears twice", e.scenario_id));
            }
            let ok = match self.method_used {
                Method::Llm => (0.0..=100.0).contains(&e.score),
                Method::Embedding => (-1.0..=1.0).contains(&e.score),
                Method::Random => e.score == 0.0,
            };
            if !ok {
                return Err(format!(
                    "score {} of {} out of range for {}",
                    e.score, e.scenario_id, self.method_used
                ));
            }
        }
        Ok(())
    }

    /// The selected heuristics, in rank order.
    pub fn heuristics<'p>(&self, pool: &'p Pool) -> Vec<&'p Heuristic> {
        self.ranked
            .iter()
            .filter_map(|e| pool.get(&e.scenario_id))
            .collect()
    }
}

/// Entries rendered for the ranking prompt, separated by blank lines.
pub fn render_heuristics_list(entries: &[Heuristic]) -> String {
    entries
        .iter()
        .map(Heuristic::render_block)
        .collect::<Vec<_>>()
        .join("\n\n")
}

pub fn build_retrieval_prompt(
    template: &Template,
    task: &str,
    entries: &[Heuristic],
    k: usize,
) -> Result<String, RetrievalError> {
    if entries.is_empty() {
        return Err(RetrievalError::EmptyPool);
    }
    let k = k.to_string();
    let list = render_heuristics_list(entries);
    Ok(template.render(&[("k", &k), ("heuristics_list", &list), ("task", task)])?)
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, RetrievalError> {
    if u.len() != v.len() {
        return Err(RetrievalError::DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(RetrievalError::ZeroVector);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Asks the ranking model. After `retry_limit` extra attempts that all fail
/// to parse, ranks by embedding instead.
pub fn rank_llm(
    gateway: &Gateway,
    template: &Template,
    task: &str,
    pool: &[Heuristic],
    config: &RetrievalConfig,
    session: &str,
) -> Result<RetrievalResult, RetrievalError> {
    let prompt = build_retrieval_prompt(template, task, pool, config.k)?;
    let valid: Vec<&str> = pool.iter().map(|h| h.scenario_id.as_str()).collect();
    let params = ChatParams::new(StepLabel::Retrieval).session([session]);
    let messages = [ChatMessage::user(prompt)];
    for attempt in 0..=config.retry_limit {
        let reply = gateway.chat(&messages, &[], &params)?;
        match parse_ranker_response(&reply.message.content, &valid, config.k) {
            Ok(ranked) => {
                return Ok(RetrievalResult {
                    ranked,
                    method_used: Method::Llm,
                    requested_k: config.k,
                })
            }
            Err(RetrievalError::MalformedRankerOutput) => {
                log::warn!("{session}: unparseable ranking (attempt {})", attempt + 1);
            }
            Err(e) => return Err(e),
        }
    }
    log::warn!("{session}: falling back to embedding retrieval");
    rank_embedding(gateway, task, pool, config.k)
}

/// Ranks by cosine similarity between `task` and each entry's task text.
pub fn rank_embedding(
    gateway: &Gateway,
    task: &str,
    pool: &[Heuristic],
    k: usize,
) -> Result<RetrievalResult, RetrievalError> {
    if pool.is_empty() {
        return Err(RetrievalError::EmptyPool);
    }
    let tasks: Vec<String> = pool.iter().map(|h| h.task.clone()).collect();
    let ranked = rank_texts(gateway, task, &tasks, k)?
        .into_iter()
        .map(|(i, score)| RankedEntry {
            scenario_id: pool[i].scenario_id.clone(),
            score,
            rationale: String::new(),
        })
        .collect();
    Ok(RetrievalResult {
        ranked,
        method_used: Method::Embedding,
        requested_k: k,
    })
}

/// Indices of the `k` texts closest to `query` by cosine similarity, with
/// their scores. Equal scores keep input order.
pub fn rank_texts(
    gateway: &Gateway,
    query: &str,
    texts: &[String],
    k: usize,
) -> Result<Vec<(usize, f64)>, RetrievalError> {
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let mut batch = Vec::with_capacity(texts.len() + 1);
    batch.push(query.to_string());
    batch.extend(texts.iter().cloned());
    let vectors = gateway.embed(&batch, StepLabel::Retrieval)?;
    let q = &vectors[0];
    let mut scored = Vec::with_capacity(texts.len());
    for (i, v) in vectors[1..].iter().enumerate() {
        scored.push((i, cosine(q, v)?));
    }
    // stable, so equal scores stay in input order
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    scored.truncate(k);
    Ok(scored)
}

/// A uniform sample of `min(k, |pool|)` entries without replacement.
pub fn rank_random(pool: &[Heuristic], k: usize, seed: u64) -> RetrievalResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = k.min(pool.len());
    let ranked = rand::seq::index::sample(&mut rng, pool.len(), n)
        .into_iter()
        .map(|i| RankedEntry {
            scenario_id: pool[i].scenario_id.clone(),
            score: 0.0,
            rationale: String::new(),
        })
        .collect();
    RetrievalResult {
        ranked,
        method_used: Method::Random,
        requested_k: k,
    }
}

/// Filters `pool` by outcome and ranks it with the configured method. An
/// empty filtered pool yields an empty result.
pub fn retrieve(
    gateway: &Gateway,
    template: &Template,
    task: &str,
    pool: &Pool,
    config: &RetrievalConfig,
    session: &str,
) -> Result<RetrievalResult, RetrievalError> {
    config.validate()?;
    let filtered = pool.filter_by_outcome(config.outcome_filter);
    let entries = filtered.entries();
    if entries.is_empty() {
        return Ok(RetrievalResult {
            ranked: Vec::new(),
            method_used: config.method,
            requested_k: config.k,
        });
    }
    match config.method {
        Method::Llm => rank_llm(gateway, template, task, entries, config, session),
        Method::Embedding => rank_embedding(gateway, task, entries, config.k),
        Method::Random => Ok(rank_random(
            entries,
            config.k,
            config.seed.expect("validated above"),
        )),
    }
}
