//! Acceptance run: one line per criterion, non-zero exit if any fails.
//!
//! Every oracle here is computed independently of the code under test:
//! brute-force sorts, enumeration, summation, golden files written by
//! `scripts/make_fixtures.py`.

// `ensure!(a > b)` expands to `!(a > b)` on purpose: a NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use chrono::{TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use common::{environment, fixtures, harness, scenarios};
use erl_core::env::invoke;
use erl_core::eval::{cost_report, GuidanceMode, IterativeConfig, PriceTable, RewardMode, RunMatrix};
use erl_core::gateway::{usage_report, Gateway, ScriptEntry, ScriptedBackend, StepLabel, TokenCounts, Usage};
use erl_core::pool::{Heuristic, Outcome, OutcomeSource, Pool};
use erl_core::reflection::{build_reflection_prompt, validation_text};
use erl_core::retrieval::{
    build_retrieval_prompt, parse_ranker_response, rank_embedding, retrieve, Method, RetrievalConfig,
};
use erl_core::template::{residual_placeholders, Templates};

type Verdict = Result<String, String>;

type Criterion = (&'static str, fn() -> Verdict);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn heuristic(id: &str, task: &str, outcome: Outcome, raw: &str) -> Heuristic {
    Heuristic {
        scenario_id: id.to_string(),
        task: task.to_string(),
        outcome,
        outcome_source: OutcomeSource::EnvReward,
        analysis: "analysis".into(),
        guideline_trigger: "trigger".into(),
        guideline_action: "action".into(),
        raw_text: raw.to_string(),
        created_at: Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap(),
    }
}

// ---------------------------------------------------------------- 1

fn end_to_end_demo() -> Verdict {
    let start = Instant::now();
    let run = || {
        let env = environment();
        let source = scenarios(&env, "source.json");
        let test = scenarios(&env, "test.json");
        let acc = harness(&env, "accumulate.json")
            .accumulate(&source, RewardMode::Env, Pool::new())
            .map_err(|e| e.to_string())?;
        let cfg = RetrievalConfig::default();
        let baseline = harness(&env, "baseline.json")
            .evaluate(&test, GuidanceMode::None, &Pool::new(), &[], &cfg, 1, false)
            .map_err(|e| e.to_string())?;
        let erl = harness(&env, "erl.json")
            .evaluate(&test, GuidanceMode::Heuristics, &acc.pool, &[], &cfg, 1, false)
            .map_err(|e| e.to_string())?;
        Ok::<_, String>((acc.pool, baseline, erl))
    };
    let (pool, baseline, erl) = run()?;
    let (pool2, baseline2, erl2) = run()?;
    let elapsed = start.elapsed();

    ensure!(test_ids(&baseline.matrix).len() == 6, "fixture must have 6 scenarios");
    let flipped: Vec<&str> = baseline
        .matrix
        .rows()
        .filter(|(id, row)| !row[0].is_success() && erl.matrix.row(id).is_some_and(|r| r[0].is_success()))
        .map(|(id, _)| id)
        .collect();
    ensure!(flipped.len() >= 2, "only {flipped:?} flip from failure to success");
    let (b, e) = (baseline.matrix.success_rate(), erl.matrix.success_rate());
    ensure!(e > b, "ERL SR {e} is not above baseline SR {b}");
    ensure!(
        pool == pool2 && baseline.episodes == baseline2.episodes && erl.episodes == erl2.episodes,
        "two identical runs differ"
    );
    ensure!(erl.usage == erl2.usage, "ledgers differ between identical runs");
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!(
        "baseline SR {:.3}, ERL SR {:.3}, flipped {:?}, two runs identical, {:.2?} for both",
        b, e, flipped, elapsed
    ))
}

fn test_ids(m: &RunMatrix) -> Vec<&str> {
    m.scenario_ids().iter().map(String::as_str).collect()
}

// ---------------------------------------------------------------- 2

fn retrieval_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x2e7);
    for trial in 0..100 {
        let size = rng.random_range(1..=200);
        let dim = rng.random_range(4..=64);
        let k = rng.random_range(1..=size + 5);
        let vector = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect() };
        let query = vector(&mut rng);
        let mut backend = ScriptedBackend::new().with_vector("query", query.clone());
        let mut pool = Vec::with_capacity(size);
        let mut scored = Vec::with_capacity(size);
        for i in 0..size {
            let v = vector(&mut rng);
            let task = format!("task {i}");
            scored.push((oracle_cosine(&query, &v), format!("id{i:03}")));
            backend = backend.with_vector(task.clone(), v);
            pool.push(heuristic(&format!("id{i:03}"), &task, Outcome::Success, "x"));
        }
        // exhaustive: repeatedly take the best remaining, earliest on ties
        let mut expected = Vec::new();
        let mut remaining: Vec<(f64, String)> = scored;
        while !remaining.is_empty() && expected.len() < k {
            let mut best = 0;
            for j in 1..remaining.len() {
                if remaining[j].0 > remaining[best].0 {
                    best = j;
                }
            }
            expected.push(remaining.remove(best).1);
        }
        let gw = Gateway::from_backend(backend);
        let got = rank_embedding(&gw, "query", &pool, k).map_err(|e| e.to_string())?;
        let got: Vec<String> = got.ids().iter().map(|s| s.to_string()).collect();
        ensure!(got == expected, "trial {trial} (size {size}, dim {dim}, k {k}) differs");
    }
    Ok("100 pools, sizes 1..=200, dims 4..=64, exact id sequences".into())
}

fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..a.len() {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    dot / (na.sqrt() * nb.sqrt())
}

// ---------------------------------------------------------------- 3

const FUZZ_IDS: [&str; 6] = ["S01", "S02", "S03", "S04", "S05", "S06"];

fn mutate(rng: &mut ChaCha8Rng) -> String {
    let mut obj = Map::new();
    for id in FUZZ_IDS {
        if !rng.random_bool(0.7) {
            continue;
        }
        let score: f64 = rng.random_range(-50.0..160.0);
        let value = match rng.random_range(0..5) {
            0 => json!(["because", score]),
            1 => json!([score.round(), "reversed"]),
            2 => json!(score),
            3 => json!(format!("{score:.0}")),
            _ => json!({"justification": "why", "score": score}),
        };
        obj.insert(id.to_string(), value);
    }
    if rng.random_bool(0.3) {
        obj.insert("S99".into(), json!(["unknown id", 99]));
    }
    let mut text = serde_json::to_string_pretty(&Value::Object(obj)).unwrap();
    let mut bytes: Vec<char> = text.chars().collect();
    for _ in 0..rng.random_range(0..4) {
        match rng.random_range(0..6) {
            0 if !bytes.is_empty() => {
                let cut = rng.random_range(0..bytes.len());
                bytes.truncate(cut);
            }
            1 if !bytes.is_empty() => {
                let at = rng.random_range(0..bytes.len());
                bytes.remove(at);
            }
            2 => {
                let at = rng.random_range(0..=bytes.len());
                let junk = ['{', '}', '"', ',', '[', ']', ':', 'x', '\n', 'é'][rng.random_range(0..10)];
                bytes.insert(at, junk);
            }
            3 => {
                text = bytes.iter().collect();
                bytes = format!("Here is my ranking:\n```json\n{text}\n```\nDone.").chars().collect();
            }
            4 => {
                text = bytes.iter().collect();
                bytes = format!("{text}\n{{\"S01\": [\"second object\", 1]}}").chars().collect();
            }
            _ => {}
        }
    }
    bytes.into_iter().collect()
}

fn ranker_fuzz() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let pool = Pool::from_entries(
        FUZZ_IDS
            .iter()
            .map(|id| heuristic(id, &format!("task for {id}"), Outcome::Failure, "lesson")),
    )
    .map_err(|e| e.to_string())?;
    let templates = Templates::builtin();
    let (mut accepted, mut malformed) = (0, 0);
    for case in 0..1000 {
        let text = mutate(&mut rng);
        let k = rng.random_range(1..=8);
        let parsed = panic::catch_unwind(|| parse_ranker_response(&text, &FUZZ_IDS, k))
            .map_err(|_| format!("case {case} panicked on {text:?}"))?;
        // the same text through the full retrieval path: one attempt, one retry
        let backend = ScriptedBackend::new().push("retrieval", ScriptEntry::text(text.clone())).cycle("retrieval");
        let gw = Gateway::from_backend(backend);
        let config = RetrievalConfig {
            k,
            ..RetrievalConfig::default()
        };
        let result = panic::catch_unwind(AssertUnwindSafe(|| retrieve(&gw, &templates.retrieval, "a task", &pool, &config, "fuzz")))
            .map_err(|_| format!("case {case}: retrieval panicked"))?
            .map_err(|e| format!("case {case}: {e}"))?;
        result.check(pool.entries()).map_err(|e| format!("case {case}: {e}"))?;
        let calls = gw.ledger().report().step(StepLabel::Retrieval).calls;
        match parsed {
            Ok(entries) => {
                accepted += 1;
                ensure!(result.method_used == Method::Llm && calls == 1, "case {case}: accepted output not used directly");
                ensure!(result.ranked == entries, "case {case}: retrieval disagrees with parser");
                ensure!(
                    entries.windows(2).all(|w| w[0].score >= w[1].score),
                    "case {case}: not sorted by score"
                );
            }
            Err(_) => {
                malformed += 1;
                ensure!(
                    result.method_used == Method::Embedding && calls == 2,
                    "case {case}: malformed output gave {} after {calls} calls",
                    result.method_used
                );
            }
        }
    }
    ensure!(accepted > 100 && malformed > 100, "fuzz mix too narrow: {accepted} accepted, {malformed} malformed");
    Ok(format!("1000 cases, {accepted} accepted and valid, {malformed} malformed -> retry then embedding"))
}

// ---------------------------------------------------------------- 4

fn metrics_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..1000 {
        let n = rng.random_range(1..=12);
        let k = rng.random_range(1..=5);
        let p: f64 = rng.random_range(0.0..=1.0);
        let rows: Vec<(String, Vec<Outcome>)> = (0..n)
            .map(|i| (format!("s{i}"), (0..k).map(|_| Outcome::from_bool(rng.random_bool(p))).collect()))
            .collect();
        let m = RunMatrix::from_rows(k, rows.clone()).map_err(|e| e.to_string())?;

        // enumerate every cell, then every row
        let mut cells = 0usize;
        let mut wins = 0usize;
        let mut any = 0usize;
        let mut all = 0usize;
        for (_, row) in &rows {
            let mut row_wins = 0;
            for o in row {
                cells += 1;
                if *o == Outcome::Success {
                    wins += 1;
                    row_wins += 1;
                }
            }
            if row_wins > 0 {
                any += 1;
            }
            if row_wins == k {
                all += 1;
            }
        }
        let sr = wins as f64 / cells as f64;
        let at = any as f64 / n as f64;
        let hat = all as f64 / n as f64;
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        ensure!(close(m.success_rate(), sr), "case {case}: SR {} vs {sr}", m.success_rate());
        ensure!(close(m.pass_at_k(), at), "case {case}: pass@k {} vs {at}", m.pass_at_k());
        ensure!(close(m.pass_hat_k(), hat), "case {case}: pass^k {} vs {hat}", m.pass_hat_k());
        ensure!(
            m.pass_hat_k() <= m.success_rate() + 1e-12 && m.success_rate() <= m.pass_at_k() + 1e-12,
            "case {case}: sandwich violated"
        );
    }
    Ok("1000 random matrices match enumeration; pass^k <= SR <= pass@k throughout".into())
}

// ---------------------------------------------------------------- 5

fn random_text(rng: &mut ChaCha8Rng) -> String {
    const ALPHABET: &[&str] = &["a", "Z", " ", "\n", "\"", "\\", "{", "}", "é", "日本", "\t", "😀", "0", ":"];
    let len = rng.random_range(1..40);
    let s: String = (0..len).map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())]).collect();
    format!("x{s}")
}

fn pool_round_trip() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for trial in 0..10 {
        let mut pool = Pool::new();
        for i in 0..500 {
            let mut h = heuristic(
                &format!("t{trial}-{i}"),
                &random_text(&mut rng),
                Outcome::from_bool(rng.random_bool(0.5)),
                &random_text(&mut rng),
            );
            h.analysis = random_text(&mut rng);
            h.guideline_trigger = random_text(&mut rng);
            h.guideline_action = random_text(&mut rng);
            h.outcome_source = if rng.random_bool(0.5) {
                OutcomeSource::EnvReward
            } else {
                OutcomeSource::SelfAssessed
            };
            h.created_at = Utc.timestamp_opt(rng.random_range(0..4_000_000_000), 0).unwrap();
            pool.append(h).map_err(|e| e.to_string())?;
        }
        let path = dir.path().join(format!("pool{trial}.jsonl"));
        pool.save(&path).map_err(|e| e.to_string())?;
        let loaded = Pool::load(&path).map_err(|e| e.to_string())?;
        ensure!(loaded.entries() == pool.entries(), "trial {trial}: entries differ after reload");
    }

    let mut pool = Pool::new();
    pool.append(heuristic("dup", "t", Outcome::Success, "r")).map_err(|e| e.to_string())?;
    ensure!(
        pool.append(heuristic("dup", "other", Outcome::Failure, "r")).is_err(),
        "duplicate append accepted"
    );
    let line = serde_json::to_string(&heuristic("dup", "t", Outcome::Success, "r")).unwrap();
    let path = dir.path().join("dup.jsonl");
    std::fs::write(&path, format!("{line}\n{line}\n")).map_err(|e| e.to_string())?;
    ensure!(Pool::load(&path).is_err(), "file with a repeated id loaded");
    Ok("10 random 500-entry pools identical after save/load; duplicate ids rejected in memory and on load".into())
}

// ---------------------------------------------------------------- 6

fn prompt_fidelity() -> Verdict {
    let golden = fixtures().join("golden");
    let read = |name: &str| std::fs::read_to_string(golden.join(name)).map_err(|e| format!("{name}: {e}"));
    let gen_in: Value = serde_json::from_str(&read("generation_inputs.json")?).map_err(|e| e.to_string())?;
    let ret_in: Value = serde_json::from_str(&read("retrieval_inputs.json")?).map_err(|e| e.to_string())?;
    let t = Templates::builtin();

    ensure!(gen_in["validation_info"] == "FAILURE", "golden input drifted");
    let generation = build_reflection_prompt(
        &t.generation,
        gen_in["task_info"].as_str().unwrap(),
        gen_in["trajectory_text"].as_str().unwrap(),
        &validation_text(Outcome::Failure, OutcomeSource::EnvReward),
    )
    .map_err(|e| e.to_string())?;

    let entries: Vec<Heuristic> = ret_in["heuristics"]
        .as_array()
        .unwrap()
        .iter()
        .map(|h| {
            let outcome = if h["outcome"] == "success" { Outcome::Success } else { Outcome::Failure };
            heuristic(h["scenario_id"].as_str().unwrap(), h["task"].as_str().unwrap(), outcome, h["raw_text"].as_str().unwrap())
        })
        .collect();
    let retrieval = build_retrieval_prompt(
        &t.retrieval,
        ret_in["task"].as_str().unwrap(),
        &entries,
        ret_in["k"].as_u64().unwrap() as usize,
    )
    .map_err(|e| e.to_string())?;

    ensure!(generation == read("generation_prompt.txt")?, "generation prompt differs from golden file");
    ensure!(retrieval == read("retrieval_prompt.txt")?, "retrieval prompt differs from golden file");
    for (name, text) in [("generation", &generation), ("retrieval", &retrieval)] {
        let left = residual_placeholders(text);
        ensure!(left.is_empty(), "{name} prompt keeps {left:?}");
    }
    ensure!(
        generation.contains("Your goal is to perform a \"Post-Mortem Analysis\" to extract transferable lessons"),
        "generation wording drifted"
    );
    ensure!(
        retrieval.contains("identify the TOP 20 most relevant heuristics"),
        "retrieval wording drifted"
    );
    Ok("both prompts byte-identical to golden files, no unbound placeholders".into())
}

// ---------------------------------------------------------------- 7

fn random_action(rng: &mut ChaCha8Rng, known_ids: &[String], emails: &[String]) -> (String, Map<String, Value>) {
    let pick = |rng: &mut ChaCha8Rng, v: &[String]| v[rng.random_range(0..v.len())].clone();
    let day = rng.random_range(10..28);
    let hour = rng.random_range(7..20);
    let (tool, args) = match rng.random_range(0..6) {
        0 => (
            "Calendar__add_calendar_event",
            json!({"title": format!("E{}", rng.random_range(0..9)),
                   "start_datetime": format!("2024-10-{day} {hour:02}:00:00"),
                   "end_datetime": format!("2024-10-{day} {:02}:30:00", hour)}),
        ),
        1 => ("Calendar__delete_calendar_event", json!({"event_id": pick(rng, known_ids)})),
        2 => (
            "Emails__send_email",
            json!({"recipients": [pick(rng, emails)], "subject": "s", "body": "b"}),
        ),
        3 => ("Emails__send_email", json!({"recipients": ["Not An Address"], "subject": "s", "body": "b"})),
        4 => ("Contacts__search_contacts", json!({"query": "a"})),
        _ => ("System__get_current_time", json!({})),
    };
    (tool.to_string(), args.as_object().unwrap().clone())
}

fn environment_determinism() -> Verdict {
    let env = environment();
    env.check_disjoint().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut sequences = 0;
    for u in env.universes() {
        let ids: Vec<String> = u.calendar_events.iter().map(|e| e.event_id.clone()).collect();
        let emails: Vec<String> = u.contacts.iter().map(|c| c.email.clone()).collect();
        for _ in 0..20 {
            let actions: Vec<_> = (0..rng.random_range(1..30)).map(|_| random_action(&mut rng, &ids, &emails)).collect();
            let replay = || {
                let mut state = u.working_copy();
                let observations: Vec<String> = actions
                    .iter()
                    .map(|(tool, args)| match invoke(&mut state, tool, args) {
                        Ok(o) => o,
                        Err(e) => format!("Error: {e}"),
                    })
                    .collect();
                (state.fingerprint(), observations)
            };
            ensure!(replay() == replay(), "replay of {} diverged", u.universe_id);
            sequences += 1;
        }
    }

    // the failure mode behind the recipient lesson
    let source = scenarios(&env, "source.json");
    let acc = harness(&env, "accumulate.json")
        .accumulate(&source[..1], RewardMode::Env, Pool::new())
        .map_err(|e| e.to_string())?;
    let s01 = &acc.trajectories[0];
    let rejected = s01
        .trajectory
        .steps
        .iter()
        .any(|s| s.observation.as_deref().is_some_and(|o| o.contains("Invalid email address")));
    ensure!(rejected && s01.outcome == Outcome::Failure, "S01 did not reproduce the invalid address failure");

    // the replacement task: unsafe order fails, create-then-delete passes
    let test = scenarios(&env, "test.json");
    let t4: Vec<_> = test.into_iter().filter(|s| s.scenario_id == "T4").collect();
    let pool = Pool::load(&fixtures().join("pool.jsonl")).map_err(|e| e.to_string())?;
    let cfg = RetrievalConfig::default();
    let unsafe_run = harness(&env, "baseline.json")
        .evaluate(&t4, GuidanceMode::None, &Pool::new(), &[], &cfg, 1, false)
        .map_err(|e| e.to_string())?;
    let safe_run = harness(&env, "erl.json")
        .evaluate(&t4, GuidanceMode::Heuristics, &pool, &[], &cfg, 1, false)
        .map_err(|e| e.to_string())?;
    let tools = |ep: &erl_core::eval::EpisodeSummary| -> Vec<String> {
        ep.trajectory.steps.iter().filter_map(|s| s.action.as_ref().map(|a| a.tool.clone())).collect()
    };
    let safe_tools = tools(&safe_run.episodes[0]);
    let add = safe_tools.iter().position(|t| t == "Calendar__add_calendar_event");
    let del = safe_tools.iter().position(|t| t == "Calendar__delete_calendar_event");
    ensure!(add.is_some() && add < del, "guided run did not create before deleting: {safe_tools:?}");
    ensure!(
        unsafe_run.episodes[0].outcome == Outcome::Failure && safe_run.episodes[0].outcome == Outcome::Success,
        "replacement outcomes wrong"
    );
    Ok(format!(
        "{sequences} random action sequences replay to identical state hashes; {} universes disjoint; invalid-address and safe-replacement regressions pass",
        env.len()
    ))
}

// ---------------------------------------------------------------- 8

fn accounting() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let prices = PriceTable::uniform(1.25, 0.125, 10.0);
    for case in 0..500 {
        let entries: Vec<Usage> = (0..rng.random_range(0..60))
            .map(|_| {
                let prompt = rng.random_range(0..50_000u64);
                Usage {
                    counts: TokenCounts {
                        prompt_tokens: prompt,
                        completion_tokens: rng.random_range(0..5_000),
                        cached_prompt_tokens: rng.random_range(0..=prompt),
                    },
                    step_label: StepLabel::ALL[rng.random_range(0..3)],
                }
            })
            .collect();

        let mut sums: BTreeMap<&str, [u64; 4]> = BTreeMap::new();
        for e in &entries {
            for key in [e.step_label.as_str(), "total"] {
                let s = sums.entry(key).or_default();
                s[0] += e.counts.prompt_tokens;
                s[1] += e.counts.cached_prompt_tokens;
                s[2] += e.counts.completion_tokens;
                s[3] += 1;
            }
        }
        let report = cost_report(&usage_report(&entries), Some(&prices), None).map_err(|e| e.to_string())?;
        let steps: Vec<&str> = report.rows.iter().map(|r| r.step.as_str()).collect();
        ensure!(steps == ["generation", "retrieval", "rollout", "total"], "case {case}: rows {steps:?}");
        let mut total_cost = 0.0;
        for row in &report.rows {
            let s = sums.get(row.step.as_str()).copied().unwrap_or_default();
            ensure!(
                [row.input_tokens, row.cached_input_tokens, row.output_tokens, row.calls] == s,
                "case {case}: {} totals differ",
                row.step
            );
            let cost = ((s[0] - s[1]) as f64 * 1.25 + s[1] as f64 * 0.125 + s[2] as f64 * 10.0) / 1e6;
            let got = row.cost_usd.unwrap();
            ensure!((got - cost).abs() <= 1e-9 * cost.max(1.0), "case {case}: {} cost {got} vs {cost}", row.step);
            if row.step != "total" {
                total_cost += cost;
            }
        }
        let total = report.row("total").unwrap().cost_usd.unwrap();
        ensure!((total - total_cost).abs() <= 1e-9 * total_cost.max(1.0), "case {case}: total cost");
    }
    Ok("500 random ledgers: per-step tokens, calls and costs match summation; rows generation/retrieval/rollout/total".into())
}

// ---------------------------------------------------------------- 9

fn iterative_semantics() -> Verdict {
    let env = environment();
    let tasks = scenarios(&env, "iterative.json");
    let config = IterativeConfig {
        num_batches: 2,
        batch_size: 3,
        retrieval: RetrievalConfig::default(),
        seed: None,
    };
    let out = harness(&env, "iterative.json")
        .iterative_erl(&tasks, &config, RewardMode::Env)
        .map_err(|e| e.to_string())?;
    ensure!(out.steps.len() == 6, "{} steps", out.steps.len());
    let first = &out.steps[0];
    ensure!(
        first.pool_before.is_empty() && first.retrieval.injected.is_empty() && first.retrieval.method_used.is_none(),
        "first episode was guided"
    );
    let mut added: Vec<String> = Vec::new();
    for (i, s) in out.steps.iter().enumerate() {
        ensure!(s.batch == i / 3, "{} in batch {}", s.scenario_id, s.batch);
        ensure!(s.pool_before == added, "{}: pool before {:?}, expected {:?}", s.scenario_id, s.pool_before, added);
        ensure!(s.retrieval.candidates == s.pool_before, "{}: candidates are not the current pool", s.scenario_id);
        ensure!(
            !s.retrieval.injected.contains(&s.scenario_id) && !s.retrieval.candidates.contains(&s.scenario_id),
            "{} saw its own heuristic",
            s.scenario_id
        );
        ensure!(
            s.retrieval.injected.iter().all(|id| s.pool_before.contains(id)),
            "{} was guided by a later task",
            s.scenario_id
        );
        if s.added {
            added.push(s.scenario_id.clone());
        }
    }
    ensure!(out.pool.len() == 6, "final pool has {}", out.pool.len());
    let s05 = out.steps.iter().find(|s| s.scenario_id == "S05").unwrap();
    ensure!(s05.outcome == Some(Outcome::Success), "S05 did not benefit from the S04 lesson");
    Ok("pool grows 0..6 monotonically, first episode unguided, no task sees its own or a later heuristic".into())
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("end-to-end scripted demonstration", end_to_end_demo),
        ("retrieval oracle equivalence", retrieval_oracle),
        ("ranker-output fuzzing", ranker_fuzz),
        ("metrics oracle", metrics_oracle),
        ("pool round-trip", pool_round_trip),
        ("prompt fidelity", prompt_fidelity),
        ("environment determinism and disjointness", environment_determinism),
        ("accounting exactness", accounting),
        ("iterative semantics", iterative_semantics),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let verdict = panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match verdict {
            Ok(detail) => println!("criterion {} [{}]: PASS ({})", i + 1, name, detail),
            Err(why) => {
                failed += 1;
                println!("criterion {} [{}]: FAIL ({})", i + 1, name, why);
            }
        }
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
