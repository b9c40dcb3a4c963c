//! Error types for every subsystem, plus a crate-wide [`Error`] that wraps them.

use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::gateway::StepLabel;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template {template} has no {{{placeholder}}} placeholder")]
    MissingPlaceholder {
        template: String,
        placeholder: String,
    },
    #[error("template {template} leaves {{{placeholder}}} unbound")]
    UnboundPlaceholder {
        template: String,
        placeholder: String,
    },
    #[error("reading template {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("duplicate scenario id {0}")]
    DuplicateScenarioId(String),
    #[error("invalid heuristic {scenario_id}: {reason}")]
    InvalidHeuristic { scenario_id: String, reason: String },
    #[error("pool file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("pool file {path}, line {line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport error{}: {message}", status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    Transport {
        status: Option<u16>,
        message: String,
    },
    #[error("request timed out")]
    Timeout,
    #[error("scripted backend has no response left for session {session}")]
    BackendScriptExhausted { session: String },
    #[error("scripted response {index} of session {session} requires the prompt to contain {guard:?}")]
    ScriptGuard {
        session: String,
        index: usize,
        guard: String,
    },
    #[error("invalid messages: {0}")]
    InvalidMessages(String),
    #[error("invalid usage block: {0}")]
    InvalidUsage(String),
    #[error("embedding dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("unexpected response: {0}")]
    Protocol(String),
    #[error("script {path}: {message}")]
    Script { path: PathBuf, message: String },
}

#[derive(Debug, Error)]
pub enum ReflectionError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("reflection response is empty")]
    EmptyReflection,
    #[error("no verdict token in self-assessment response: {0:?}")]
    UnparseableVerdict(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("heuristic pool is empty")]
    EmptyPool,
    #[error("invalid retrieval config: {0}")]
    InvalidConfig(String),
    #[error("no JSON object found in ranker output")]
    MalformedRankerOutput,
    #[error("cannot take cosine of a zero vector")]
    ZeroVector,
    #[error("vector dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Failures of a single tool call. These are reported back to the agent as
/// observations, never raised out of an episode.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ToolError {
    #[error("Unknown tool: {0}")]
    UnknownTool(String),
    #[error("Invalid arguments for {tool}: {message}")]
    Argument { tool: String, message: String },
    #[error("{0}")]
    Domain(String),
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("{path}: schema error at {field}: {message}")]
    Schema {
        path: PathBuf,
        field: String,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("unknown universe {0}")]
    UnknownUniverse(String),
    #[error("universes {first} and {second} share {what} {value}")]
    NotDisjoint {
        first: String,
        second: String,
        what: &'static str,
        value: String,
    },
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no price configured for {field} of step {step}")]
    MissingPrice { step: StepLabel, field: &'static str },
    #[error("run matrix is not rectangular: row {row} has {found} entries, expected {expected}")]
    RaggedMatrix {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("writing {path}: {message}")]
    Output { path: PathBuf, message: String },
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Reflection(#[from] ReflectionError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Crate-wide error.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Reflection(#[from] ReflectionError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl Error {
    /// True for failures of the model backend or its transport, as opposed to
    /// configuration or input-file problems.
    pub fn is_backend(&self) -> bool {
        match self {
            Error::Gateway(_) => true,
            Error::Reflection(ReflectionError::Gateway(_)) => true,
            Error::Retrieval(RetrievalError::Gateway(_)) => true,
            Error::Eval(e) => matches!(
                e,
                EvalError::Gateway(_)
                    | EvalError::Reflection(ReflectionError::Gateway(_))
                    | EvalError::Retrieval(RetrievalError::Gateway(_))
            ),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
