//! Deterministic replay backend.
//!
//! A script holds named sessions, each an ordered queue of responses. A call
//! with step `rollout` and session hint `["S1", "run2"]` looks for the sessions
//! `rollout/S1/run2`, `rollout/S1` and `rollout`, in that order, and consumes
//! the next entry of the first one that exists. Sessions marked `cycle` start
//! over once exhausted; others fail with
//! [`GatewayError::BackendScriptExhausted`].
//!
//! An entry may carry a `guard_substring` that must appear somewhere in the
//! request's messages. A mismatch fails the call immediately, which catches
//! template or guidance regressions in end-to-end tests.
//!
//! Script file layout:
//!
//! ```json
//! {
//!   "sessions": {
//!     "rollout/S1": {"cycle": true, "entries": [
//!       {"response_text": "Looking up the contact.",
//!        "tool_call": {"name": "Contacts__get_contact", "arguments": {"name": "Ana"}}},
//!       {"response_text": "FINAL ANSWER: done", "usage": {"prompt_tokens": 900, "completion_tokens": 12}}
//!     ]},
//!     "generation": [{"guard_substring": "IF FAILURE:", "response_text": "Analysis: ..."}]
//!   },
//!   "embeddings": {"dim": 64, "vectors": {"a": [1.0, 0.0]}}
//! }
//! ```
//!
//! Entries without a `usage` block report an estimate of four characters per
//! token, so cost reports stay meaningful in scripted runs.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use serde::Deserialize;
use serde_json::{Map, Value};

use crate::error::GatewayError;
use crate::tokens::estimate_tokens;

use super::{
    ChatBackend, ChatMessage, ChatReply, ChatRequest, EmbedBackend, EmbedReply, HashEmbedder,
    TokenCounts, ToolCall,
};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    #[serde(default)]
    pub guard_substring: Option<String>,
    #[serde(default)]
    pub response_text: Option<String>,
    #[serde(default)]
    pub tool_call: Option<ScriptToolCall>,
    #[serde(default)]
    pub usage: Option<TokenCounts>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptToolCall {
    pub name: String,
    #[serde(default)]
    pub arguments: Map<String, Value>,
}

impl ScriptEntry {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            guard_substring: None,
            response_text: Some(text.into()),
            tool_call: None,
            usage: None,
        }
    }

    /// A tool call; `arguments` must be a JSON object.
    pub fn tool(name: impl Into<String>, arguments: Value) -> Self {
        let arguments = match arguments {
            Value::Object(map) => map,
            other => panic!("tool arguments must be an object, got {other}"),
        };
        Self {
            guard_substring: None,
            response_text: None,
            tool_call: Some(ScriptToolCall {
                name: name.into(),
                arguments,
            }),
            usage: None,
        }
    }

    pub fn thought(mut self, text: impl Into<String>) -> Self {
        self.response_text = Some(text.into());
        self
    }

    pub fn guard(mut self, substring: impl Into<String>) -> Self {
        self.guard_substring = Some(substring.into());
        self
    }

    pub fn usage(mut self, prompt: u64, completion: u64, cached: u64) -> Self {
        self.usage = Some(TokenCounts {
            prompt_tokens: prompt,
            completion_tokens: completion,
            cached_prompt_tokens: cached,
        });
        self
    }

    fn validate(&self) -> Result<(), String> {
        if self.response_text.is_none() && self.tool_call.is_none() {
            return Err("entry needs response_text or tool_call".into());
        }
        if let Some(u) = &self.usage {
            u.validate().map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
struct Session {
    #[serde(default)]
    cycle: bool,
    entries: Vec<ScriptEntry>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SessionSpec {
    Entries(Vec<ScriptEntry>),
    Full(Session),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EmbeddingSpec {
    #[serde(default = "default_dim")]
    dim: usize,
    #[serde(default)]
    vectors: BTreeMap<String, Vec<f64>>,
}

fn default_dim() -> usize {
    64
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptFile {
    #[serde(default)]
    sessions: BTreeMap<String, SessionSpec>,
    #[serde(default)]
    embeddings: Option<EmbeddingSpec>,
}

/// Replays scripted responses; see the module docs for the file format.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    sessions: BTreeMap<String, Session>,
    cursors: Mutex<HashMap<String, usize>>,
    vectors: BTreeMap<String, Vec<f64>>,
    fallback: HashEmbedder,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_path(path: &Path) -> Result<Self, GatewayError> {
        let text = fs::read_to_string(path).map_err(|e| GatewayError::Script {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_json_str(&text).map_err(|e| match e {
            GatewayError::Script { message, .. } => GatewayError::Script {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self, GatewayError> {
        let script_err = |message: String| GatewayError::Script {
            path: "<inline>".into(),
            message,
        };
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: ScriptFile = serde_path_to_error::deserialize(de)
            .map_err(|e| script_err(format!("at {}: {}", e.path(), e.inner())))?;
        let mut backend = Self::new();
        for (name, spec) in file.sessions {
            let session = match spec {
                SessionSpec::Entries(entries) => Session {
                    cycle: false,
                    entries,
                },
                SessionSpec::Full(s) => s,
            };
            for (i, entry) in session.entries.iter().enumerate() {
                entry
                    .validate()
                    .map_err(|m| script_err(format!("session {name}, entry {i}: {m}")))?;
            }
            backend.sessions.insert(name, session);
        }
        if let Some(emb) = file.embeddings {
            if emb.dim == 0 {
                return Err(script_err("embeddings.dim must be positive".into()));
            }
            backend.fallback = HashEmbedder::new(emb.dim);
            backend.vectors = emb.vectors;
        }
        Ok(backend)
    }

    /// Appends an entry to `session`, creating it if needed.
    pub fn push(mut self, session: impl Into<String>, entry: ScriptEntry) -> Self {
        entry.validate().expect("valid script entry");
        self.sessions.entry(session.into()).or_default().entries.push(entry);
        self
    }

    pub fn cycle(mut self, session: impl Into<String>) -> Self {
        self.sessions.entry(session.into()).or_default().cycle = true;
        self
    }

    pub fn with_vector(mut self, text: impl Into<String>, vector: Vec<f64>) -> Self {
        self.vectors.insert(text.into(), vector);
        self
    }

    pub fn with_embedding_dim(mut self, dim: usize) -> Self {
        self.fallback = HashEmbedder::new(dim);
        self
    }

    pub fn session_names(&self) -> impl Iterator<Item = &str> {
        self.sessions.keys().map(String::as_str)
    }

    fn resolve(&self, request: &ChatRequest<'_>) -> Result<String, GatewayError> {
        let step = request.params.step.as_str();
        let hint = &request.params.session;
        let candidates = (0..=hint.len()).rev().map(|n| {
            std::iter::once(step)
                .chain(hint[..n].iter().map(String::as_str))
                .collect::<Vec<_>>()
                .join("/")
        });
        let mut most_specific = None;
        for name in candidates {
            if self.sessions.contains_key(&name) {
                return Ok(name);
            }
            most_specific.get_or_insert(name);
        }
        Err(GatewayError::BackendScriptExhausted {
            session: most_specific.unwrap_or_else(|| step.to_string()),
        })
    }
}

impl ChatBackend for ScriptedBackend {
    fn chat(&self, request: &ChatRequest<'_>) -> Result<ChatReply, GatewayError> {
        let name = self.resolve(request)?;
        let session = &self.sessions[&name];
        let index = {
            let mut cursors = self.cursors.lock().expect("cursor lock");
            let cursor = cursors.entry(name.clone()).or_insert(0);
            if *cursor >= session.entries.len() {
                if session.cycle && !session.entries.is_empty() {
                    *cursor = 0;
                } else {
                    return Err(GatewayError::BackendScriptExhausted { session: name });
                }
            }
            let index = *cursor;
            *cursor += 1;
            index
        };
        let entry = &session.entries[index];

        if let Some(guard) = &entry.guard_substring {
            if !request.messages.iter().any(|m| m.content.contains(guard)) {
                return Err(GatewayError::ScriptGuard {
                    session: name,
                    index,
                    guard: guard.clone(),
                });
            }
        }

        let content = entry.response_text.clone().unwrap_or_default();
        let message = match &entry.tool_call {
            Some(call) => ChatMessage::assistant_tool_call(
                content.clone(),
                ToolCall {
                    id: Some(format!("call_{}_{}", name.replace('/', "_"), index)),
                    name: call.name.clone(),
                    arguments: call.arguments.clone(),
                },
            ),
            None => ChatMessage::assistant(content.clone()),
        };
        let usage = entry.usage.unwrap_or_else(|| {
            let prompt: usize = request
                .messages
                .iter()
                .map(|m| estimate_tokens(&m.content))
                .sum();
            let completion = estimate_tokens(&content)
                + entry
                    .tool_call
                    .as_ref()
                    .map(|c| estimate_tokens(&Value::Object(c.arguments.clone()).to_string()))
                    .unwrap_or(0);
            TokenCounts {
                prompt_tokens: prompt as u64,
                completion_tokens: completion as u64,
                cached_prompt_tokens: 0,
            }
        });
        Ok(ChatReply { message, usage })
    }
}

impl EmbedBackend for ScriptedBackend {
    fn embed(&self, texts: &[String]) -> Result<EmbedReply, GatewayError> {
        let vectors = texts
            .iter()
            .map(|t| {
                self.vectors
                    .get(t)
                    .cloned()
                    .unwrap_or_else(|| self.fallback.embed_text(t))
            })
            .collect();
        Ok(EmbedReply {
            vectors,
            usage: TokenCounts::default(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ChatParams, Gateway, StepLabel};
    use serde_json::json;

    fn user(text: &str) -> Vec<ChatMessage> {
        vec![ChatMessage::user(text)]
    }

    #[test]
    fn replays_in_order_and_echoes_usage() {
        let gw = Gateway::from_backend(
            ScriptedBackend::new()
                .push("rollout", ScriptEntry::text("hello").usage(7, 3, 2))
                .push("rollout", ScriptEntry::text("again")),
        );
        let params = ChatParams::new(StepLabel::Rollout);
        let first = gw.chat(&user("hi"), &[], &params).unwrap();
        assert_eq!(first.message.content, "hello");
        assert_eq!(first.usage.counts, TokenCounts::new(7, 3, 2).unwrap());
        assert_eq!(gw.chat(&user("hi"), &[], &params).unwrap().message.content, "again");
        assert!(matches!(
            gw.chat(&user("hi"), &[], &params),
            Err(GatewayError::BackendScriptExhausted { .. })
        ));
    }

    #[test]
    fn empty_script_is_exhausted() {
        let gw = Gateway::from_backend(ScriptedBackend::new());
        let err = gw
            .chat(&user("hi"), &[], &ChatParams::new(StepLabel::Generation))
            .unwrap_err();
        assert!(matches!(err, GatewayError::BackendScriptExhausted { session } if session == "generation"));
    }

    #[test]
    fn most_specific_session_wins() {
        let gw = Gateway::from_backend(
            ScriptedBackend::new()
                .push("rollout", ScriptEntry::text("generic"))
                .push("rollout/S1", ScriptEntry::text("specific")),
        );
        let s1 = ChatParams::new(StepLabel::Rollout).session(["S1", "run0"]);
        let s2 = ChatParams::new(StepLabel::Rollout).session(["S2"]);
        assert_eq!(gw.chat(&user("x"), &[], &s1).unwrap().message.content, "specific");
        assert_eq!(gw.chat(&user("x"), &[], &s2).unwrap().message.content, "generic");
    }

    #[test]
    fn cycle_sessions_restart() {
        let gw = Gateway::from_backend(
            ScriptedBackend::new()
                .push("rollout", ScriptEntry::text("a"))
                .push("rollout", ScriptEntry::text("b"))
                .cycle("rollout"),
        );
        let p = ChatParams::new(StepLabel::Rollout);
        let got: Vec<String> = (0..5)
            .map(|_| gw.chat(&user("x"), &[], &p).unwrap().message.content)
            .collect();
        assert_eq!(got, ["a", "b", "a", "b", "a"]);
    }

    #[test]
    fn guard_fails_fast() {
        let gw = Gateway::from_backend(
            ScriptedBackend::new().push("rollout", ScriptEntry::text("ok").guard("Lessons")),
        );
        let err = gw
            .chat(&user("no guidance here"), &[], &ChatParams::new(StepLabel::Rollout))
            .unwrap_err();
        assert!(matches!(err, GatewayError::ScriptGuard { index: 0, .. }));
    }

    #[test]
    fn tool_call_entries() {
        let gw = Gateway::from_backend(ScriptedBackend::new().push(
            "rollout",
            ScriptEntry::tool("Contacts__get_contact", json!({"name": "Ana"})).thought("look up"),
        ));
        let out = gw
            .chat(&user("x"), &[], &ChatParams::new(StepLabel::Rollout))
            .unwrap();
        let call = out.message.tool_call.unwrap();
        assert_eq!(call.name, "Contacts__get_contact");
        assert_eq!(call.arguments["name"], "Ana");
        assert_eq!(out.message.content, "look up");
    }

    #[test]
    fn parses_script_file() {
        let script = r#"{
            "sessions": {
                "rollout/S1": {"cycle": true, "entries": [
                    {"response_text": "FINAL ANSWER: ok", "usage": {"prompt_tokens": 5, "completion_tokens": 1}}
                ]},
                "generation": [{"guard_substring": "IF FAILURE:", "response_text": "Analysis: x"}]
            },
            "embeddings": {"dim": 2, "vectors": {"a": [1.0, 0.0], "b": [0.0, 1.0]}}
        }"#;
        let backend = ScriptedBackend::from_json_str(script).unwrap();
        assert_eq!(
            backend.session_names().collect::<Vec<_>>(),
            ["generation", "rollout/S1"]
        );
        let gw = Gateway::from_backend(backend);
        let v = gw
            .embed(&["a".to_string(), "b".to_string()], StepLabel::Retrieval)
            .unwrap();
        assert_eq!(v, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let three = gw
            .embed(&["a".into(), "b".into(), "zzz".into()], StepLabel::Retrieval)
            .unwrap();
        assert_eq!(three.len(), 3);
        assert!(three.iter().all(|v| v.len() == 2));
    }

    #[test]
    fn rejects_entry_without_response() {
        let err = ScriptedBackend::from_json_str(r#"{"sessions": {"rollout": [{"guard_substring": "x"}]}}"#)
            .unwrap_err();
        assert!(err.to_string().contains("response_text or tool_call"));
    }

    #[test]
    fn unequal_scripted_vectors_are_rejected() {
        let gw = Gateway::from_backend(
            ScriptedBackend::new()
                .with_vector("a", vec![1.0, 0.0])
                .with_vector("b", vec![1.0, 0.0, 0.0]),
        );
        let err = gw
            .embed(&["a".into(), "b".into()], StepLabel::Retrieval)
            .unwrap_err();
        assert!(matches!(err, GatewayError::DimensionMismatch { expected: 2, found: 3 }));
    }
}
