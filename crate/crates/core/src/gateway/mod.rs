//! Uniform access to chat-completion and embedding backends.
//!
//! Every model call goes through a [`Gateway`], which validates the message
//! list, forwards it to a [`ChatBackend`] and records the reported token usage
//! in a shared [`UsageLedger`] under the caller's [`StepLabel`].
//!
//! Two backends ship with the crate:
//!
//! - [`HttpBackend`] speaks the common chat-completions JSON protocol.
//! - [`ScriptedBackend`] replays canned responses from named sessions, which
//!   makes whole agent runs reproducible in tests.

mod hash_embed;
mod http;
mod ledger;
mod scripted;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::GatewayError;

pub use hash_embed::HashEmbedder;
pub use http::{HttpBackend, HttpConfig, API_KEY_ENV};
pub use ledger::{usage_report, StepTotals, UsageLedger, UsageReport};
pub use scripted::{ScriptEntry, ScriptedBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
            Role::Tool => "tool",
        }
    }
}

/// A structured tool invocation requested by the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub name: String,
    #[serde(default)]
    pub arguments: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    #[serde(default)]
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call: Option<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self::plain(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::plain(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::plain(Role::Assistant, content)
    }

    pub fn assistant_tool_call(content: impl Into<String>, call: ToolCall) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
            tool_call: Some(call),
            tool_call_id: None,
        }
    }

    pub fn tool(tool_call_id: impl Into<String>, content: impl Into<String>) -> Self {
        Self {
            role: Role::Tool,
            content: content.into(),
            tool_call: None,
            tool_call_id: Some(tool_call_id.into()),
        }
    }

    fn plain(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
            tool_call: None,
            tool_call_id: None,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        match self.role {
            Role::Tool if self.tool_call_id.is_none() => Err(GatewayError::InvalidMessages(
                "tool message without tool_call_id".into(),
            )),
            Role::Assistant if self.content.is_empty() && self.tool_call.is_none() => Err(
                GatewayError::InvalidMessages("assistant message with neither content nor tool call".into()),
            ),
            _ => Ok(()),
        }
    }
}

/// JSON-schema description of a tool offered to the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSchema {
    pub name: String,
    pub description: String,
    pub parameters: Value,
}

/// Which phase of the method a model call belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepLabel {
    Generation,
    Retrieval,
    Rollout,
    SelfAssessment,
}

impl StepLabel {
    pub const ALL: [StepLabel; 4] = [
        StepLabel::Generation,
        StepLabel::Retrieval,
        StepLabel::Rollout,
        StepLabel::SelfAssessment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StepLabel::Generation => "generation",
            StepLabel::Retrieval => "retrieval",
            StepLabel::Rollout => "rollout",
            StepLabel::SelfAssessment => "self_assessment",
        }
    }
}

impl fmt::Display for StepLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Raw token counts for one call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCounts {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    #[serde(default)]
    pub cached_prompt_tokens: u64,
}

impl TokenCounts {
    pub fn new(prompt: u64, completion: u64, cached: u64) -> Result<Self, GatewayError> {
        let counts = Self {
            prompt_tokens: prompt,
            completion_tokens: completion,
            cached_prompt_tokens: cached,
        };
        counts.validate()?;
        Ok(counts)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.cached_prompt_tokens > self.prompt_tokens {
            return Err(GatewayError::InvalidUsage(format!(
                "cached_prompt_tokens {} exceeds prompt_tokens {}",
                self.cached_prompt_tokens, self.prompt_tokens
            )));
        }
        Ok(())
    }
}

/// Token counts attributed to a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    #[serde(flatten)]
    pub counts: TokenCounts,
    pub step_label: StepLabel,
}

/// Per-call options.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatParams {
    pub step: StepLabel,
    /// Routing hint from most general to most specific, e.g. `["S1", "run2"]`.
    /// Live backends ignore it; the scripted backend uses it to pick a session.
    pub session: Vec<String>,
    pub temperature: Option<f64>,
}

impl ChatParams {
    pub fn new(step: StepLabel) -> Self {
        Self {
            step,
            session: Vec::new(),
            temperature: None,
        }
    }

    pub fn session<I, S>(mut self, parts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.session = parts.into_iter().map(Into::into).collect();
        self
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ChatRequest<'a> {
    pub messages: &'a [ChatMessage],
    pub tools: &'a [ToolSchema],
    pub params: &'a ChatParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatReply {
    pub message: ChatMessage,
    pub usage: TokenCounts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedReply {
    pub vectors: Vec<Vec<f64>>,
    pub usage: TokenCounts,
}

pub trait ChatBackend: Send + Sync {
    fn chat(&self, request: &ChatRequest<'_>) -> Result<ChatReply, GatewayError>;
}

pub trait EmbedBackend: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<EmbedReply, GatewayError>;
}

/// The result of [`Gateway::chat`].
#[derive(Debug, Clone, PartialEq)]
pub struct ChatOutcome {
    pub message: ChatMessage,
    pub usage: Usage,
}

/// Backend handles plus the usage ledger they report into.
#[derive(Clone)]
pub struct Gateway {
    chat: Arc<dyn ChatBackend>,
    embed: Arc<dyn EmbedBackend>,
    ledger: Arc<UsageLedger>,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("ledger_entries", &self.ledger.len())
            .finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(chat: Arc<dyn ChatBackend>, embed: Arc<dyn EmbedBackend>) -> Self {
        Self {
            chat,
            embed,
            ledger: Arc::new(UsageLedger::default()),
        }
    }

    /// A gateway whose chat and embedding calls both go to `backend`.
    pub fn from_backend<B>(backend: B) -> Self
    where
        B: ChatBackend + EmbedBackend + 'static,
    {
        let backend = Arc::new(backend);
        Self::new(backend.clone(), backend)
    }

    /// Same backends, fresh ledger.
    pub fn with_fresh_ledger(&self) -> Self {
        Self {
            chat: self.chat.clone(),
            embed: self.embed.clone(),
            ledger: Arc::new(UsageLedger::default()),
        }
    }

    pub fn ledger(&self) -> &Arc<UsageLedger> {
        &self.ledger
    }

    /// Sends one chat turn and records its usage.
    pub fn chat(
        &self,
        messages: &[ChatMessage],
        tools: &[ToolSchema],
        params: &ChatParams,
    ) -> Result<ChatOutcome, GatewayError> {
        validate_messages(messages)?;
        let reply = self.chat.chat(&ChatRequest {
            messages,
            tools,
            params,
        })?;
        if reply.message.role != Role::Assistant {
            return Err(GatewayError::Protocol(format!(
                "backend replied with role {}",
                reply.message.role.as_str()
            )));
        }
        // An empty reply is a poor answer, not a transport failure; callers
        // parse it and fall back like any other malformed output.
        reply.usage.validate()?;
        let usage = Usage {
            counts: reply.usage,
            step_label: params.step,
        };
        self.ledger.record(usage);
        Ok(ChatOutcome {
            message: reply.message,
            usage,
        })
    }

    /// Embeds `texts`, one vector each, all of equal dimension.
    pub fn embed(&self, texts: &[String], step: StepLabel) -> Result<Vec<Vec<f64>>, GatewayError> {
        if texts.is_empty() {
            return Err(GatewayError::InvalidMessages("nothing to embed".into()));
        }
        let reply = self.embed.embed(texts)?;
        if reply.vectors.len() != texts.len() {
            return Err(GatewayError::Protocol(format!(
                "{} embeddings for {} inputs",
                reply.vectors.len(),
                texts.len()
            )));
        }
        let expected = reply.vectors[0].len();
        if let Some(bad) = reply.vectors.iter().find(|v| v.len() != expected) {
            return Err(GatewayError::DimensionMismatch {
                expected,
                found: bad.len(),
            });
        }
        reply.usage.validate()?;
        if reply.usage != TokenCounts::default() {
            self.ledger.record(Usage {
                counts: reply.usage,
                step_label: step,
            });
        }
        Ok(reply.vectors)
    }
}

fn validate_messages(messages: &[ChatMessage]) -> Result<(), GatewayError> {
    if messages.is_empty() {
        return Err(GatewayError::InvalidMessages("empty message list".into()));
    }
    if messages.iter().skip(1).any(|m| m.role == Role::System) {
        return Err(GatewayError::InvalidMessages(
            "system message must come first".into(),
        ));
    }
    messages.iter().try_for_each(ChatMessage::validate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn message_invariants() {
        assert!(ChatMessage::tool("c1", "ok").validate().is_ok());
        let mut bad = ChatMessage::tool("c1", "ok");
        bad.tool_call_id = None;
        assert!(bad.validate().is_err());
        assert!(ChatMessage::assistant("").validate().is_err());
        let call = ToolCall {
            id: None,
            name: "x".into(),
            arguments: Map::new(),
        };
        assert!(ChatMessage::assistant_tool_call("", call).validate().is_ok());
    }

    #[test]
    fn system_must_lead() {
        let msgs = vec![ChatMessage::user("hi"), ChatMessage::system("sys")];
        assert!(validate_messages(&msgs).is_err());
        assert!(validate_messages(&[]).is_err());
        let ok = vec![ChatMessage::system("sys"), ChatMessage::user("hi")];
        assert!(validate_messages(&ok).is_ok());
    }

    #[test]
    fn cached_cannot_exceed_prompt() {
        assert!(TokenCounts::new(10, 1, 11).is_err());
        assert!(TokenCounts::new(10, 1, 10).is_ok());
    }
}
