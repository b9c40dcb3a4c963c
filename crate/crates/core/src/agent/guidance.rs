//! Guidance injected into the agent's system prompt before an episode.
//!
//! The injected section is wrapped in fixed delimiter lines so that prompt
//! diffs can find it:
//!
//! ```text
//! === Lessons from past experience ===
//! ...heuristic blocks...
//! === End of lessons ===
//! ```
//!
//! Few-shot trajectories use `=== Example trajectories ===` and
//! `=== End of examples ===` instead.

use serde::{Deserialize, Serialize};

use crate::pool::Heuristic;
use crate::tokens::{CharRatio, TokenCounter};

use super::trajectory::{TrajectoryRecord, DEFAULT_OBSERVATION_BUDGET};

pub const LESSONS_BEGIN: &str = "=== Lessons from past experience ===";
pub const LESSONS_END: &str = "=== End of lessons ===";
pub const EXAMPLES_BEGIN: &str = "=== Example trajectories ===";
pub const EXAMPLES_END: &str = "=== End of examples ===";

const LESSONS_INTRO: &str = "The following heuristics were learned from earlier tasks in this environment. \
Apply a heuristic when its trigger matches your situation.";
const EXAMPLES_INTRO: &str = "The following are complete trajectories from earlier tasks in this environment.";
const ITEM_SEPARATOR: &str = "\n\n---\n\n";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceKind {
    #[default]
    None,
    Heuristics,
    FewshotTrajectories,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuidancePayload {
    pub kind: GuidanceKind,
    pub items: Vec<String>,
    pub token_estimate: usize,
    /// Scenario ids the items were drawn from, in item order.
    pub source_ids: Vec<String>,
}

impl GuidancePayload {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn heuristics<'a>(entries: impl IntoIterator<Item = &'a Heuristic>) -> Self {
        let (source_ids, items): (Vec<String>, Vec<String>) = entries
            .into_iter()
            .map(|h| (h.scenario_id.clone(), h.render_block()))
            .unzip();
        let token_estimate = items.iter().map(|i| CharRatio.count(i)).sum();
        Self {
            kind: if items.is_empty() {
                GuidanceKind::None
            } else {
                GuidanceKind::Heuristics
            },
            items,
            token_estimate,
            source_ids,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Appends the guidance section to `base`. With no guidance, `base` is
/// returned unchanged.
pub fn compose_system_prompt(base: &str, guidance: &GuidancePayload) -> String {
    let (begin, intro, end) = match guidance.kind {
        GuidanceKind::None => return base.to_string(),
        GuidanceKind::Heuristics => (LESSONS_BEGIN, LESSONS_INTRO, LESSONS_END),
        GuidanceKind::FewshotTrajectories => (EXAMPLES_BEGIN, EXAMPLES_INTRO, EXAMPLES_END),
    };
    if guidance.items.is_empty() {
        return base.to_string();
    }
    let mut out = String::with_capacity(base.len() + guidance.token_estimate * 4 + 256);
    out.push_str(base.trim_end());
    out.push_str("\n\n");
    out.push_str(begin);
    out.push('\n');
    out.push_str(intro);
    out.push_str("\n\n");
    out.push_str(&guidance.items.join(ITEM_SEPARATOR));
    out.push('\n');
    out.push_str(end);
    out.push('\n');
    out
}

/// Renders one stored trajectory as a few-shot example.
pub fn render_fewshot_item(record: &TrajectoryRecord) -> String {
    format!(
        "Scenario ID: {}\nTask: {}\nOutcome: {}\n{}",
        record.scenario_id,
        record.task.trim(),
        record.outcome,
        record.trajectory.render(DEFAULT_OBSERVATION_BUDGET)
    )
}

/// Takes whole trajectories in order while the running estimate stays within
/// `budget_tokens`. Stops at the first one that does not fit.
pub fn render_fewshot_block(records: &[TrajectoryRecord], budget_tokens: usize) -> GuidancePayload {
    render_fewshot_block_with(records, budget_tokens, &CharRatio)
}

pub fn render_fewshot_block_with(
    records: &[TrajectoryRecord],
    budget_tokens: usize,
    counter: &dyn TokenCounter,
) -> GuidancePayload {
    let mut payload = GuidancePayload::none();
    for record in records {
        let item = render_fewshot_item(record);
        let cost = counter.count(&item);
        if payload.token_estimate + cost > budget_tokens {
            break;
        }
        payload.token_estimate += cost;
        payload.items.push(item);
        payload.source_ids.push(record.scenario_id.clone());
    }
    if !payload.items.is_empty() {
        payload.kind = GuidanceKind::FewshotTrajectories;
    }
    payload
}
