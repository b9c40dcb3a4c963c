//! Chat-completions style HTTP backend.
//!
//! Request: `POST {base_url}{chat_path}` with `model`, `messages`, `tools`
//! and `temperature`. Response: `choices[0].message` plus a `usage` block with
//! `prompt_tokens`, `completion_tokens` and optionally
//! `prompt_tokens_details.cached_tokens`. Embeddings use
//! `POST {base_url}{embed_path}` with `input` and read `data[i].embedding`.

use std::time::Duration;

use serde_json::{json, Map, Value};

use crate::error::GatewayError;

use super::{
    ChatBackend, ChatMessage, ChatReply, ChatRequest, EmbedBackend, EmbedReply, Role, TokenCounts,
    ToolCall,
};

/// Environment variable holding the bearer token for live backends.
pub const API_KEY_ENV: &str = "ERL_API_KEY";

const BODY_EXCERPT: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    pub base_url: String,
    pub chat_path: String,
    pub embed_path: String,
    pub model: String,
    pub embed_model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            chat_path: "/chat/completions".into(),
            embed_path: "/embeddings".into(),
            model: model.into(),
            embed_model: "text-embedding-3-small".into(),
            api_key: None,
            timeout: Duration::from_secs(300),
        }
    }

    /// Reads the API key from [`API_KEY_ENV`].
    pub fn with_env_key(mut self) -> Self {
        self.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        self
    }
}

#[derive(Debug)]
pub struct HttpBackend {
    agent: ureq::Agent,
    config: HttpConfig,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent, config }
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, GatewayError> {
        let url = format!("{}{}", self.config.base_url, path);
        let mut req = self.agent.post(&url).header("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send(body.to_string()).map_err(map_ureq)?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(map_ureq)?;
        if status >= 400 {
            return Err(GatewayError::Transport {
                status: Some(status),
                message: excerpt(&text),
            });
        }
        serde_json::from_str(&text)
            .map_err(|e| GatewayError::Protocol(format!("invalid JSON ({e}): {}", excerpt(&text))))
    }
}

fn map_ureq(e: ureq::Error) -> GatewayError {
    match e {
        ureq::Error::Timeout(_) => GatewayError::Timeout,
        other => GatewayError::Transport {
            status: None,
            message: other.to_string(),
        },
    }
}

fn excerpt(text: &str) -> String {
    text.chars().take(BODY_EXCERPT).collect()
}

/// Builds the request body for a chat call.
pub(crate) fn chat_request_body(model: &str, request: &ChatRequest<'_>) -> Value {
    let messages: Vec<Value> = request.messages.iter().map(message_to_wire).collect();
    let mut body = json!({
        "model": model,
        "messages": messages,
    });
    if !request.tools.is_empty() {
        body["tools"] = request
            .tools
            .iter()
            .map(|t| {
                json!({
                    "type": "function",
                    "function": {
                        "name": t.name,
                        "description": t.description,
                        "parameters": t.parameters,
                    }
                })
            })
            .collect();
    }
    if let Some(t) = request.params.temperature {
        body["temperature"] = json!(t);
    }
    body
}

fn message_to_wire(m: &ChatMessage) -> Value {
    let mut v = json!({ "role": m.role.as_str(), "content": m.content });
    if let Some(call) = &m.tool_call {
        v["tool_calls"] = json!([{
            "id": call.id.clone().unwrap_or_else(|| "call_0".into()),
            "type": "function",
            "function": {
                "name": call.name,
                "arguments": Value::Object(call.arguments.clone()).to_string(),
            }
        }]);
    }
    if let Some(id) = &m.tool_call_id {
        v["tool_call_id"] = json!(id);
    }
    v
}

/// Parses a chat-completions response body.
pub(crate) fn parse_chat_response(body: &Value) -> Result<ChatReply, GatewayError> {
    let message = body
        .pointer("/choices/0/message")
        .ok_or_else(|| GatewayError::Protocol("missing choices[0].message".into()))?;
    let content = message
        .get("content")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let tool_call = message
        .get("tool_calls")
        .and_then(Value::as_array)
        .and_then(|calls| calls.first())
        .map(|call| {
            let name = call
                .pointer("/function/name")
                .and_then(Value::as_str)
                .unwrap_or_default()
                .to_string();
            let raw = call.pointer("/function/arguments");
            let arguments = match raw {
                Some(Value::String(s)) => match serde_json::from_str::<Value>(s) {
                    Ok(Value::Object(map)) => map,
                    _ => {
                        let mut m = Map::new();
                        m.insert("_unparsed".into(), Value::String(s.clone()));
                        m
                    }
                },
                Some(Value::Object(map)) => map.clone(),
                _ => Map::new(),
            };
            ToolCall {
                id: call.get("id").and_then(Value::as_str).map(str::to_string),
                name,
                arguments,
            }
        });
    let usage = parse_usage(body.get("usage"))?;
    Ok(ChatReply {
        message: ChatMessage {
            role: Role::Assistant,
            content,
            tool_call,
            tool_call_id: None,
        },
        usage,
    })
}

fn parse_usage(usage: Option<&Value>) -> Result<TokenCounts, GatewayError> {
    let Some(u) = usage else {
        return Ok(TokenCounts::default());
    };
    let count = |ptr: &str| u.pointer(ptr).and_then(Value::as_u64).unwrap_or(0);
    TokenCounts::new(
        count("/prompt_tokens"),
        count("/completion_tokens"),
        count("/prompt_tokens_details/cached_tokens"),
    )
}

pub(crate) fn parse_embed_response(body: &Value, n: usize) -> Result<EmbedReply, GatewayError> {
    let data = body
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| GatewayError::Protocol("missing data array".into()))?;
    let mut indexed: Vec<(usize, Vec<f64>)> = Vec::with_capacity(data.len());
    for (pos, item) in data.iter().enumerate() {
        let idx = item
            .get("index")
            .and_then(Value::as_u64)
            .map(|i| i as usize)
            .unwrap_or(pos);
        let vector = item
            .get("embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| GatewayError::Protocol(format!("data[{pos}] has no embedding")))?
            .iter()
            .map(|x| {
                x.as_f64()
                    .ok_or_else(|| GatewayError::Protocol("non-numeric embedding value".into()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        indexed.push((idx, vector));
    }
    indexed.sort_by_key(|(i, _)| *i);
    if indexed.len() != n {
        return Err(GatewayError::Protocol(format!(
            "{} embeddings for {n} inputs",
            indexed.len()
        )));
    }
    let usage = parse_usage(body.get("usage"))?;
    Ok(EmbedReply {
        vectors: indexed.into_iter().map(|(_, v)| v).collect(),
        usage,
    })
}

impl ChatBackend for HttpBackend {
    fn chat(&self, request: &ChatRequest<'_>) -> Result<ChatReply, GatewayError> {
        let body = chat_request_body(&self.config.model, request);
        let resp = self.post(&self.config.chat_path, &body)?;
        parse_chat_response(&resp)
    }
}

impl EmbedBackend for HttpBackend {
    fn embed(&self, texts: &[String]) -> Result<EmbedReply, GatewayError> {
        let body = json!({ "model": self.config.embed_model, "input": texts });
        let resp = self.post(&self.config.embed_path, &body)?;
        parse_embed_response(&resp, texts.len())
    }
}
