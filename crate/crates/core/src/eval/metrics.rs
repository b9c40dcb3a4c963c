use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::env::{Scenario, Split};
use crate::error::EvalError;
use crate::pool::Outcome;

/// Outcomes of repeated runs: one row per scenario, one column per run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMatrix {
    scenario_ids: Vec<String>,
    outcomes: Vec<Vec<Outcome>>,
    runs_per_scenario: usize,
}

impl RunMatrix {
    pub fn new(runs_per_scenario: usize) -> Self {
        Self {
            scenario_ids: Vec::new(),
            outcomes: Vec::new(),
            runs_per_scenario,
        }
    }

    pub fn from_rows(
        runs_per_scenario: usize,
        rows: impl IntoIterator<Item = (String, Vec<Outcome>)>,
    ) -> Result<Self, EvalError> {
        let mut m = Self::new(runs_per_scenario);
        for (id, row) in rows {
            m.push_row(id, row)?;
        }
        Ok(m)
    }

    pub fn push_row(&mut self, scenario_id: String, row: Vec<Outcome>) -> Result<(), EvalError> {
        if row.len() != self.runs_per_scenario {
            return Err(EvalError::RaggedMatrix {
                row: self.outcomes.len(),
                found: row.len(),
                expected: self.runs_per_scenario,
            });
        }
        self.scenario_ids.push(scenario_id);
        self.outcomes.push(row);
        Ok(())
    }

    pub fn runs_per_scenario(&self) -> usize {
        self.runs_per_scenario
    }

    pub fn scenario_ids(&self) -> &[String] {
        &self.scenario_ids
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[Outcome])> {
        self.scenario_ids
            .iter()
            .map(String::as_str)
            .zip(self.outcomes.iter().map(Vec::as_slice))
    }

    pub fn row(&self, scenario_id: &str) -> Option<&[Outcome]> {
        self.scenario_ids
            .iter()
            .position(|id| id == scenario_id)
            .map(|i| self.outcomes[i].as_slice())
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    /// The rows whose scenario id satisfies `keep`.
    pub fn subset(&self, mut keep: impl FnMut(&str) -> bool) -> Self {
        let mut m = Self::new(self.runs_per_scenario);
        for (id, row) in self.rows() {
            if keep(id) {
                m.scenario_ids.push(id.to_string());
                m.outcomes.push(row.to_vec());
            }
        }
        m
    }

    /// Mean over all cells; 0 for an empty matrix.
    pub fn success_rate(&self) -> f64 {
        let cells = self.outcomes.len() * self.runs_per_scenario;
        if cells == 0 {
            return 0.0;
        }
        let wins = self
            .outcomes
            .iter()
            .flatten()
            .filter(|o| o.is_success())
            .count();
        wins as f64 / cells as f64
    }

    /// Fraction of scenarios solved at least once.
    pub fn pass_at_k(&self) -> f64 {
        self.row_fraction(|row| row.iter().any(|o| o.is_success()))
    }

    /// Fraction of scenarios solved on every run.
    pub fn pass_hat_k(&self) -> f64 {
        self.row_fraction(|row| row.iter().all(|o| o.is_success()))
    }

    fn row_fraction(&self, pred: impl Fn(&[Outcome]) -> bool) -> f64 {
        if self.outcomes.is_empty() || self.runs_per_scenario == 0 {
            return 0.0;
        }
        let n = self.outcomes.iter().filter(|r| pred(r)).count();
        n as f64 / self.outcomes.len() as f64
    }

    /// CSV with columns `scenario_id,run,outcome`, runs numbered from 0.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["scenario_id", "run", "outcome"])?;
        for (id, row) in self.rows() {
            for (run, o) in row.iter().enumerate() {
                w.write_record([id, &run.to_string(), o.as_str()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SplitMetrics {
    pub scenarios: usize,
    pub sr: f64,
    pub pass_at_k: f64,
    pub pass_hat_k: f64,
}

impl SplitMetrics {
    pub fn of(m: &RunMatrix) -> Self {
        Self {
            scenarios: m.len(),
            sr: m.success_rate(),
            pass_at_k: m.pass_at_k(),
            pass_hat_k: m.pass_hat_k(),
        }
    }

    /// JSON object with `pass@k` and `pass^k` keys spelled with the actual k.
    pub fn to_json(&self, k: usize) -> Value {
        let mut obj = serde_json::Map::new();
        obj.insert("scenarios".into(), json!(self.scenarios));
        obj.insert("sr".into(), json!(self.sr));
        obj.insert(format!("pass@{k}"), json!(self.pass_at_k));
        obj.insert(format!("pass^{k}"), json!(self.pass_hat_k));
        Value::Object(obj)
    }
}

/// Overall and per-split metrics for one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSummary {
    pub runs: usize,
    pub overall: SplitMetrics,
    pub splits: BTreeMap<Split, SplitMetrics>,
    pub avg_turns: Option<f64>,
}

impl MetricsSummary {
    pub fn new(matrix: &RunMatrix, scenarios: &[Scenario], avg_turns: Option<f64>) -> Self {
        let mut splits = BTreeMap::new();
        for split in [Split::Execution, Split::Search] {
            let ids: Vec<&str> = scenarios
                .iter()
                .filter(|s| s.split == split)
                .map(|s| s.scenario_id.as_str())
                .collect();
            let sub = matrix.subset(|id| ids.contains(&id));
            if !sub.is_empty() {
                splits.insert(split, SplitMetrics::of(&sub));
            }
        }
        Self {
            runs: matrix.runs_per_scenario(),
            overall: SplitMetrics::of(matrix),
            splits,
            avg_turns,
        }
    }

    pub fn to_json(&self) -> Value {
        let k = self.runs;
        let splits: serde_json::Map<String, Value> = self
            .splits
            .iter()
            .map(|(s, m)| (s.as_str().to_string(), m.to_json(k)))
            .collect();
        json!({
            "runs": k,
            "overall": self.overall.to_json(k),
            "splits": splits,
            "avg_turns": self.avg_turns,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const S: Outcome = Outcome::Success;
    const F: Outcome = Outcome::Failure;

    fn m(rows: &[&[Outcome]]) -> RunMatrix {
        RunMatrix::from_rows(
            rows[0].len(),
            rows.iter().enumerate().map(|(i, r)| (format!("s{i}"), r.to_vec())),
        )
        .unwrap()
    }

    #[test]
    fn hand_examples() {
        assert_eq!(m(&[&[S, S, S]]).success_rate(), 1.0);
        assert_eq!(m(&[&[S, F, F], &[F, F, F]]).success_rate(), 1.0 / 6.0);
        let x = m(&[&[S, F, S], &[S, S, S]]);
        assert_eq!((x.pass_at_k(), x.pass_hat_k()), (1.0, 0.5));
        let z = m(&[&[F, F], &[F, F]]);
        assert_eq!((z.pass_at_k(), z.pass_hat_k(), z.success_rate()), (0.0, 0.0, 0.0));
        assert_eq!(RunMatrix::new(3).success_rate(), 0.0);
    }

    #[test]
    fn ragged_rows_rejected() {
        let mut x = RunMatrix::new(3);
        assert!(matches!(
            x.push_row("a".into(), vec![S, F]),
            Err(EvalError::RaggedMatrix { row: 0, found: 2, expected: 3 })
        ));
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        m(&[&[S, F]]).write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "scenario_id,run,outcome\ns0,0,success\ns0,1,failure\n"
        );
    }

    #[test]
    fn json_keys_follow_k() {
        let x = m(&[&[S, F, S]]);
        let v = MetricsSummary::new(&x, &[], Some(4.0)).to_json();
        assert_eq!(v["overall"]["pass@3"], json!(1.0));
        assert_eq!(v["overall"]["pass^3"], json!(0.0));
        assert_eq!(v["avg_turns"], json!(4.0));
    }

    proptest! {
        #[test]
        fn sandwich(rows in prop::collection::vec(prop::collection::vec(any::<bool>(), 3), 1..20)) {
            let x = RunMatrix::from_rows(3, rows.iter().enumerate().map(|(i, r)| {
                (i.to_string(), r.iter().map(|&b| Outcome::from_bool(b)).collect())
            })).unwrap();
            prop_assert!(x.pass_hat_k() <= x.success_rate() + 1e-12);
            prop_assert!(x.success_rate() <= x.pass_at_k() + 1e-12);
        }
    }
}
