//! Append-only heuristic pool with JSONL persistence.
//!
//! One heuristic per line, with keys `scenario_id`, `task`, `outcome`,
//! `outcome_source`, `analysis`, `guideline_trigger`, `guideline_action`,
//! `raw_text` and `created_at` (ISO-8601, UTC). Entries keep insertion order
//! and scenario ids are unique.

use std::collections::HashSet;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::PoolError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Success,
    Failure,
}

impl Outcome {
    pub fn from_bool(success: bool) -> Self {
        if success {
            Outcome::Success
        } else {
            Outcome::Failure
        }
    }

    pub fn is_success(self) -> bool {
        self == Outcome::Success
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::Failure => "failure",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where an outcome label came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeSource {
    /// The environment's verifier.
    EnvReward,
    /// The agent's own judgement of its trajectory.
    SelfAssessed,
}

impl OutcomeSource {
    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeSource::EnvReward => "env_reward",
            OutcomeSource::SelfAssessed => "self_assessed",
        }
    }
}

/// A lesson distilled from one task attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Heuristic {
    pub scenario_id: String,
    pub task: String,
    pub outcome: Outcome,
    pub outcome_source: OutcomeSource,
    pub analysis: String,
    pub guideline_trigger: String,
    pub guideline_action: String,
    pub raw_text: String,
    pub created_at: DateTime<Utc>,
}

impl Heuristic {
    pub fn validate(&self) -> Result<(), PoolError> {
        let invalid = |reason: &str| PoolError::InvalidHeuristic {
            scenario_id: self.scenario_id.clone(),
            reason: reason.to_string(),
        };
        if self.scenario_id.trim().is_empty() {
            return Err(invalid("scenario_id is empty"));
        }
        if self.analysis.trim().is_empty() {
            return Err(invalid("analysis is empty"));
        }
        if self.raw_text.trim().is_empty() {
            return Err(invalid("raw_text is empty"));
        }
        Ok(())
    }

    /// Text block used when the heuristic is shown to a model: id, task,
    /// reward and the full reflection.
    pub fn render_block(&self) -> String {
        format!(
            "Scenario ID: {}\nTask: {}\nReward: {}\n{}",
            self.scenario_id,
            self.task.trim(),
            self.outcome,
            self.raw_text.trim()
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeFilter {
    #[default]
    All,
    FailuresOnly,
    SuccessesOnly,
}

impl OutcomeFilter {
    pub fn admits(self, outcome: Outcome) -> bool {
        match self {
            OutcomeFilter::All => true,
            OutcomeFilter::FailuresOnly => outcome == Outcome::Failure,
            OutcomeFilter::SuccessesOnly => outcome == Outcome::Success,
        }
    }
}

/// Ordered set of heuristics keyed by scenario id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Pool {
    entries: Vec<Heuristic>,
    ids: HashSet<String>,
    origin: Option<PathBuf>,
}

impl Pool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: impl IntoIterator<Item = Heuristic>) -> Result<Self, PoolError> {
        let mut pool = Self::new();
        for h in entries {
            pool.append(h)?;
        }
        Ok(pool)
    }

    pub fn append(&mut self, h: Heuristic) -> Result<(), PoolError> {
        h.validate()?;
        if self.ids.contains(&h.scenario_id) {
            return Err(PoolError::DuplicateScenarioId(h.scenario_id));
        }
        self.ids.insert(h.scenario_id.clone());
        self.entries.push(h);
        Ok(())
    }

    pub fn entries(&self) -> &[Heuristic] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, scenario_id: &str) -> bool {
        self.ids.contains(scenario_id)
    }

    pub fn get(&self, scenario_id: &str) -> Option<&Heuristic> {
        self.entries.iter().find(|h| h.scenario_id == scenario_id)
    }

    pub fn origin(&self) -> Option<&Path> {
        self.origin.as_deref()
    }

    /// A new pool holding the entries admitted by `filter`, in order.
    pub fn filter_by_outcome(&self, filter: OutcomeFilter) -> Pool {
        let entries: Vec<Heuristic> = self
            .entries
            .iter()
            .filter(|h| filter.admits(h.outcome))
            .cloned()
            .collect();
        Pool {
            ids: entries.iter().map(|h| h.scenario_id.clone()).collect(),
            entries,
            origin: self.origin.clone(),
        }
    }

    /// Immutable, cheaply clonable view for concurrent readers.
    pub fn snapshot(&self) -> PoolSnapshot {
        PoolSnapshot(Arc::from(self.entries.clone()))
    }

    /// Writes the pool to `path`, replacing any previous content. The file is
    /// written next to the target and renamed into place.
    pub fn save(&self, path: &Path) -> Result<(), PoolError> {
        let io_err = |source| PoolError::Io {
            path: path.to_path_buf(),
            source,
        };
        let tmp = path.with_extension("jsonl.tmp");
        {
            let file = File::create(&tmp).map_err(io_err)?;
            let mut w = BufWriter::new(file);
            for h in &self.entries {
                let line = serde_json::to_string(h).expect("heuristic serializes");
                writeln!(w, "{line}").map_err(io_err)?;
            }
            w.flush().map_err(io_err)?;
            w.get_ref().sync_all().map_err(io_err)?;
        }
        fs::rename(&tmp, path).map_err(io_err)
    }

    /// Reads a pool file. Blank lines are skipped; any malformed record or
    /// repeated scenario id is reported with its 1-based line number.
    pub fn load(path: &Path) -> Result<Self, PoolError> {
        let file = File::open(path).map_err(|source| PoolError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut pool = Pool::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|source| PoolError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let format_err = |message: String| PoolError::Format {
                path: path.to_path_buf(),
                line: line_no,
                message,
            };
            let h: Heuristic = serde_json::from_str(&line).map_err(|e| format_err(e.to_string()))?;
            pool.append(h).map_err(|e| format_err(e.to_string()))?;
        }
        pool.origin = Some(path.to_path_buf());
        Ok(pool)
    }
}

/// Shared read-only view of a pool's entries.
#[derive(Debug, Clone)]
pub struct PoolSnapshot(Arc<[Heuristic]>);

impl PoolSnapshot {
    pub fn entries(&self) -> &[Heuristic] {
        &self.0
    }
}

impl std::ops::Deref for PoolSnapshot {
    type Target = [Heuristic];

    fn deref(&self) -> &[Heuristic] {
        &self.0
    }
}
