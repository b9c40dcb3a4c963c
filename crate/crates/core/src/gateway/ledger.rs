use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{StepLabel, Usage};

/// Append-only log of per-call usage. Appends are serialized; readers get a
/// consistent copy.
#[derive(Debug, Default)]
pub struct UsageLedger {
    entries: Mutex<Vec<Usage>>,
}

impl UsageLedger {
    pub fn record(&self, usage: Usage) {
        self.entries.lock().expect("ledger lock").push(usage);
    }

    pub fn entries(&self) -> Vec<Usage> {
        self.entries.lock().expect("ledger lock").clone()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("ledger lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn report(&self) -> UsageReport {
        usage_report(&self.entries())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepTotals {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cached_prompt_tokens: u64,
    pub calls: u64,
}

impl StepTotals {
    pub fn add(&mut self, other: &StepTotals) {
        self.prompt_tokens += other.prompt_tokens;
        self.completion_tokens += other.completion_tokens;
        self.cached_prompt_tokens += other.cached_prompt_tokens;
        self.calls += other.calls;
    }
}

/// Per-step totals and their grand total.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageReport {
    pub steps: BTreeMap<StepLabel, StepTotals>,
    pub total: StepTotals,
}

impl UsageReport {
    pub fn step(&self, step: StepLabel) -> StepTotals {
        self.steps.get(&step).copied().unwrap_or_default()
    }

    /// Step-wise sum of two reports, e.g. an accumulation phase and the
    /// evaluation that used its pool.
    pub fn merge(&self, other: &UsageReport) -> UsageReport {
        let mut steps = self.steps.clone();
        for (step, t) in &other.steps {
            steps.entry(*step).or_default().add(t);
        }
        let mut total = self.total;
        total.add(&other.total);
        UsageReport { steps, total }
    }
}

/// Sums ledger entries per step label. Every label is present, zero if unused.
pub fn usage_report(entries: &[Usage]) -> UsageReport {
    let mut steps: BTreeMap<StepLabel, StepTotals> = StepLabel::ALL
        .iter()
        .map(|s| (*s, StepTotals::default()))
        .collect();
    for e in entries {
        let t = steps.entry(e.step_label).or_default();
        t.prompt_tokens += e.counts.prompt_tokens;
        t.completion_tokens += e.counts.completion_tokens;
        t.cached_prompt_tokens += e.counts.cached_prompt_tokens;
        t.calls += 1;
    }
    let mut total = StepTotals::default();
    for t in steps.values() {
        total.add(t);
    }
    UsageReport { steps, total }
}
