use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::pool::Outcome;

/// Default per-step observation budget, in characters.
pub const DEFAULT_OBSERVATION_BUDGET: usize = 2_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub tool: String,
    #[serde(default)]
    pub arguments: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub thought: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<Action>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<String>,
}

/// The record of one episode: one step per assistant turn.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    #[serde(default)]
    pub final_answer: Option<String>,
    pub turn_count: usize,
}

impl Trajectory {
    pub fn is_valid(&self) -> bool {
        self.turn_count == self.steps.len()
            && self
                .steps
                .iter()
                .all(|s| s.action.is_none() || s.observation.is_some())
    }

    /// Text form shared by reflection prompts and few-shot examples.
    ///
    /// Observations longer than `observation_budget` characters keep their
    /// tail; the elided head is replaced by a marker.
    pub fn render(&self, observation_budget: usize) -> String {
        let mut out = String::new();
        for (i, step) in self.steps.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let _ = writeln!(out, "Step {}", i + 1);
            if !step.thought.trim().is_empty() {
                let _ = writeln!(out, "Thought: {}", step.thought.trim());
            }
            if let Some(action) = &step.action {
                let _ = writeln!(
                    out,
                    "Action: {}({})",
                    action.tool,
                    Value::Object(action.arguments.clone())
                );
            }
            if let Some(obs) = &step.observation {
                let _ = writeln!(out, "Observation: {}", truncate_head(obs, observation_budget));
            }
        }
        if !self.steps.is_empty() {
            out.push('\n');
        }
        match &self.final_answer {
            Some(a) => {
                let _ = write!(out, "Final answer: {}", a.trim());
            }
            None => out.push_str("Final answer: (none, turn limit reached)"),
        }
        out
    }
}

/// Keeps the last `budget` characters of `text`.
pub fn truncate_head(text: &str, budget: usize) -> String {
    let total = text.chars().count();
    if total <= budget {
        return text.to_string();
    }
    let elided = total - budget;
    let tail: String = text.chars().skip(elided).collect();
    format!("[... {elided} characters elided ...]{tail}")
}

/// A stored trajectory with the task and verified outcome it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub scenario_id: String,
    pub task: String,
    pub outcome: Outcome,
    pub trajectory: Trajectory,
}
