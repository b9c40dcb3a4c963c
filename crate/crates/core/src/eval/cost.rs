//! Token and cost breakdown by step.
//!
//! Prices are per million tokens and always come from configuration. Uncached
//! input, cached input and output are billed at their own rates:
//!
//! ```text
//! cost = ((input - cached) * input_rate + cached * cached_rate + output * output_rate) / 1e6
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::EvalError;
use crate::gateway::{StepLabel, StepTotals, UsageReport};

/// Per-million-token rates. Unset fields fall back to the table default.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rates {
    #[serde(default)]
    pub input: Option<f64>,
    #[serde(default)]
    pub cached_input: Option<f64>,
    #[serde(default)]
    pub output: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceTable {
    #[serde(default)]
    pub default: Rates,
    /// Overrides for steps served by a different model, e.g. the ranker.
    #[serde(default)]
    pub steps: BTreeMap<StepLabel, Rates>,
}

impl PriceTable {
    pub fn uniform(input: f64, cached_input: f64, output: f64) -> Self {
        Self {
            default: Rates {
                input: Some(input),
                cached_input: Some(cached_input),
                output: Some(output),
            },
            steps: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let all = std::iter::once(&self.default).chain(self.steps.values());
        for r in all {
            for x in [r.input, r.cached_input, r.output].into_iter().flatten() {
                if !x.is_finite() || x < 0.0 {
                    return Err(EvalError::InvalidConfig(format!("price {x} is not a non-negative number")));
                }
            }
        }
        Ok(())
    }

    fn rate(&self, step: StepLabel, field: &'static str) -> Result<f64, EvalError> {
        let pick = |r: &Rates| match field {
            "input" => r.input,
            "cached_input" => r.cached_input,
            _ => r.output,
        };
        self.steps
            .get(&step)
            .and_then(pick)
            .or_else(|| pick(&self.default))
            .ok_or(EvalError::MissingPrice { step, field })
    }

    /// Cost in dollars of one step's totals. Rates are only required for
    /// token kinds that were actually used.
    pub fn cost(&self, step: StepLabel, t: &StepTotals) -> Result<f64, EvalError> {
        let uncached = t.prompt_tokens.saturating_sub(t.cached_prompt_tokens);
        let mut micro = 0.0;
        if uncached > 0 {
            micro += uncached as f64 * self.rate(step, "input")?;
        }
        if t.cached_prompt_tokens > 0 {
            micro += t.cached_prompt_tokens as f64 * self.rate(step, "cached_input")?;
        }
        if t.completion_tokens > 0 {
            micro += t.completion_tokens as f64 * self.rate(step, "output")?;
        }
        Ok(micro / 1e6)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    /// `generation`, `retrieval`, `rollout`, `self_assessment` or `total`.
    pub step: String,
    pub input_tokens: u64,
    pub cached_input_tokens: u64,
    pub cached_pct: f64,
    pub output_tokens: u64,
    pub calls: u64,
    pub cost_usd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub rows: Vec<CostRow>,
    pub avg_turns: Option<f64>,
}

impl CostReport {
    pub fn row(&self, step: &str) -> Option<&CostRow> {
        self.rows.iter().find(|r| r.step == step)
    }
}

fn row(step: &str, t: &StepTotals, cost_usd: Option<f64>) -> CostRow {
    CostRow {
        step: step.to_string(),
        input_tokens: t.prompt_tokens,
        cached_input_tokens: t.cached_prompt_tokens,
        cached_pct: if t.prompt_tokens == 0 {
            0.0
        } else {
            100.0 * t.cached_prompt_tokens as f64 / t.prompt_tokens as f64
        },
        output_tokens: t.completion_tokens,
        calls: t.calls,
        cost_usd,
    }
}

/// Rows for generation, retrieval and rollout (plus self-assessment when it
/// was used), then the total. Without a price table, costs are left empty.
pub fn cost_report(
    usage: &UsageReport,
    prices: Option<&PriceTable>,
    avg_turns: Option<f64>,
) -> Result<CostReport, EvalError> {
    if let Some(p) = prices {
        p.validate()?;
    }
    let mut rows = Vec::new();
    let mut total = 0.0;
    for step in StepLabel::ALL {
        let t = usage.step(step);
        if step == StepLabel::SelfAssessment && t.calls == 0 && t.prompt_tokens == 0 {
            continue;
        }
        let cost = prices.map(|p| p.cost(step, &t)).transpose()?;
        total += cost.unwrap_or(0.0);
        rows.push(row(step.as_str(), &t, cost));
    }
    rows.push(row("total", &usage.total, prices.map(|_| total)));
    Ok(CostReport { rows, avg_turns })
}
