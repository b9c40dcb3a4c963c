use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::EnvError;
use crate::pool::Outcome;

use super::{datetime, Environment, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Execution,
    Search,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Execution => "execution",
            Split::Search => "search",
        }
    }
}

/// A programmatic success condition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "parameters", rename_all = "snake_case")]
pub enum Check {
    /// Some event has this title (case-insensitive) and, when given, these
    /// exact times and attendee set.
    EventExists {
        title: String,
        #[serde(default, with = "datetime::option", skip_serializing_if = "Option::is_none")]
        start: Option<NaiveDateTime>,
        #[serde(default, with = "datetime::option", skip_serializing_if = "Option::is_none")]
        end: Option<NaiveDateTime>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        attendees: Option<Vec<String>>,
    },
    /// No event has this id, and no event has this title.
    EventAbsent {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        event_id: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        title: Option<String>,
    },
    /// Some email went to all of these addresses.
    EmailSent {
        recipients: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        subject_contains: Option<String>,
    },
    /// The final answer contains this text (case-insensitive).
    AnswerContains { substring: String },
}

impl Check {
    fn validate(&self) -> Result<(), String> {
        match self {
            Check::EventExists { title, .. } if title.trim().is_empty() => Err("title is empty".into()),
            Check::EventAbsent {
                event_id: None,
                title: None,
            } => Err("event_absent needs event_id or title".into()),
            Check::EmailSent { recipients, .. } if recipients.is_empty() => {
                Err("recipients is empty".into())
            }
            Check::AnswerContains { substring } if substring.trim().is_empty() => {
                Err("substring is empty".into())
            }
            _ => Ok(()),
        }
    }

    pub fn passes(&self, state: &WorldState, final_answer: Option<&str>) -> bool {
        match self {
            Check::EventExists {
                title,
                start,
                end,
                attendees,
            } => state.calendar_events.iter().any(|e| {
                e.title.trim().eq_ignore_ascii_case(title.trim())
                    && start.is_none_or(|s| e.start == s)
                    && end.is_none_or(|t| e.end == t)
                    && attendees.as_ref().is_none_or(|want| same_names(want, &e.attendees))
            }),
            Check::EventAbsent { event_id, title } => {
                let id_gone = event_id
                    .as_ref()
                    .is_none_or(|id| state.calendar_events.iter().all(|e| &e.event_id != id));
                let title_gone = title.as_ref().is_none_or(|t| {
                    state
                        .calendar_events
                        .iter()
                        .all(|e| !e.title.trim().eq_ignore_ascii_case(t.trim()))
                });
                id_gone && title_gone
            }
            Check::EmailSent {
                recipients,
                subject_contains,
            } => state.emails.iter().any(|m| {
                recipients
                    .iter()
                    .all(|r| m.to.iter().any(|t| t.eq_ignore_ascii_case(r)))
                    && subject_contains
                        .as_ref()
                        .is_none_or(|s| m.subject.to_lowercase().contains(&s.to_lowercase()))
            }),
            Check::AnswerContains { substring } => final_answer
                .is_some_and(|a| a.to_lowercase().contains(&substring.to_lowercase())),
        }
    }
}

/// Equal as sets of names, ignoring case, surrounding space and repeats.
fn same_names(a: &[String], b: &[String]) -> bool {
    let norm = |v: &[String]| -> BTreeSet<String> { v.iter().map(|s| s.trim().to_lowercase()).collect() };
    norm(a) == norm(b)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub scenario_id: String,
    pub universe_id: String,
    pub task: String,
    pub split: Split,
    pub checks: Vec<Check>,
}

/// Success iff every check passes. Pure.
pub fn verify(scenario: &Scenario, state: &WorldState, final_answer: Option<&str>) -> Outcome {
    Outcome::from_bool(scenario.checks.iter().all(|c| c.passes(state, final_answer)))
}

/// Parses a JSON array of scenarios. When `env` is given, every scenario must
/// reference one of its universes.
pub fn parse_scenarios(
    text: &str,
    path: &Path,
    env: Option<&Environment>,
) -> Result<Vec<Scenario>, EnvError> {
    let schema = |field: String, message: String| EnvError::Schema {
        path: path.to_path_buf(),
        field,
        message,
    };
    let de = &mut serde_json::Deserializer::from_str(text);
    let scenarios: Vec<Scenario> = serde_path_to_error::deserialize(de)
        .map_err(|e| schema(e.path().to_string(), e.inner().to_string()))?;
    let mut ids = std::collections::HashSet::new();
    for (i, s) in scenarios.iter().enumerate() {
        if !ids.insert(s.scenario_id.as_str()) {
            return Err(schema(
                format!("[{i}].scenario_id"),
                format!("duplicate scenario_id {}", s.scenario_id),
            ));
        }
        if s.task.trim().is_empty() {
            return Err(schema(format!("[{i}].task"), "empty task".into()));
        }
        if s.checks.is_empty() {
            return Err(schema(format!("[{i}].checks"), "no checks".into()));
        }
        for (j, c) in s.checks.iter().enumerate() {
            c.validate()
                .map_err(|m| schema(format!("[{i}].checks[{j}].parameters"), m))?;
        }
        if let Some(env) = env {
            if env.universe(&s.universe_id).is_err() {
                return Err(schema(
                    format!("[{i}].universe_id"),
                    format!("unknown universe {}", s.universe_id),
                ));
            }
        }
    }
    Ok(scenarios)
}

pub fn load_scenarios(path: &Path, env: Option<&Environment>) -> Result<Vec<Scenario>, EnvError> {
    let text = fs::read_to_string(path).map_err(|source| EnvError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenarios(&text, path, env)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::invoke;
    use crate::env::tests::sample;
    use serde_json::json;

    fn reschedule_scenario() -> Scenario {
        let text = r#"[{
            "scenario_id": "s1", "universe_id": "ut", "split": "execution",
            "task": "Replace the wine tasting with Wine Awakening, no attendees.",
            "checks": [
                {"kind": "event_exists", "parameters": {"title": "Wine Awakening",
                 "start": "2024-11-05 18:00:00", "end": "2024-11-05 20:00:00", "attendees": []}},
                {"kind": "event_absent", "parameters": {"event_id": "ut-evt-2"}}
            ]
        }]"#;
        parse_scenarios(text, Path::new("s.json"), None).unwrap().remove(0)
    }

    #[test]
    fn replacement_then_delete_passes() {
        let sc = reschedule_scenario();
        let mut s = sample().working_copy();
        assert_eq!(verify(&sc, &s, None), Outcome::Failure);
        let add = json!({"title": "Wine Awakening", "start_datetime": "2024-11-05 18:00:00",
                         "end_datetime": "2024-11-05 20:00:00", "attendees": []});
        invoke(&mut s, "Calendar__add_calendar_event", add.as_object().unwrap()).unwrap();
        assert_eq!(verify(&sc, &s, None), Outcome::Failure, "original still present");
        let del = json!({"event_id": "ut-evt-2"});
        invoke(&mut s, "Calendar__delete_calendar_event", del.as_object().unwrap()).unwrap();
        let before = s.clone();
        assert_eq!(verify(&sc, &s, None), Outcome::Success);
        assert_eq!(verify(&sc, &s, None), Outcome::Success);
        assert_eq!(s, before);
    }

    #[test]
    fn answer_contains_needs_an_answer() {
        let c = Check::AnswerContains {
            substring: "Riga".into(),
        };
        let s = sample().working_copy();
        assert!(!c.passes(&s, None));
        assert!(c.passes(&s, Some("They live in riga.")));
    }

    #[test]
    fn incomplete_parameters_rejected() {
        let text = r#"[{"scenario_id": "x", "universe_id": "ut", "split": "search", "task": "t",
            "checks": [{"kind": "event_absent", "parameters": {}}]}]"#;
        match parse_scenarios(text, Path::new("s.json"), None).unwrap_err() {
            EnvError::Schema { field, .. } => assert_eq!(field, "[0].checks[0].parameters"),
            other => panic!("unexpected {other:?}"),
        }
        let text = r#"[{"scenario_id": "x", "universe_id": "ut", "split": "search", "task": "t",
            "checks": [{"kind": "email_sent", "parameters": {"subject_contains": "x"}}]}]"#;
        assert!(parse_scenarios(text, Path::new("s.json"), None).is_err());
        let text = r#"[{"scenario_id": "x", "universe_id": "ut", "split": "search", "task": "t", "checks": []}]"#;
        assert!(parse_scenarios(text, Path::new("s.json"), None).is_err());
    }

    #[test]
    fn unknown_universe_rejected() {
        let env = Environment::new([sample()]).unwrap();
        let text = r#"[{"scenario_id": "x", "universe_id": "nope", "split": "search", "task": "t",
            "checks": [{"kind": "answer_contains", "parameters": {"substring": "a"}}]}]"#;
        assert!(parse_scenarios(text, Path::new("s.json"), Some(&env)).is_err());
    }
}
