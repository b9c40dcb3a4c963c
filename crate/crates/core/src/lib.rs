//! Tool-using agents that learn from their own reflected experience.
//!
//! An agent attempts tasks, reflects on each attempt, and stores the lesson as
//! a [`pool::Heuristic`]. Before a new task, the most relevant heuristics are
//! retrieved and placed in the agent's system prompt.
//!
//! The crate is organised around that loop:
//!
//! - [`gateway`] talks to chat and embedding backends and meters tokens.
//! - [`reflection`] turns an episode into a heuristic.
//! - [`pool`] stores heuristics as JSON lines.
//! - [`retrieval`] selects the top-k heuristics for a task.
//! - [`agent`] runs a ReAct episode with optional guidance.
//! - [`env`] is a small simulated calendar, contacts and email world.
//! - [`eval`] runs the experiment matrix and reports pass@k, pass^k and cost.

pub mod agent;
pub mod clock;
pub mod env;
pub mod error;
pub mod eval;
pub mod gateway;
pub mod pool;
pub mod reflection;
pub mod retrieval;
pub mod template;
pub mod tokens;

pub use error::{Error, Result};

// The guide's examples run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/heuristics.md")]
    pub struct Heuristics;
    #[doc = include_str!("../../../book/src/reflection.md")]
    pub struct Reflection;
    #[doc = include_str!("../../../book/src/retrieval.md")]
    pub struct Retrieval;
    #[doc = include_str!("../../../book/src/gateway.md")]
    pub struct Gateway;
    #[doc = include_str!("../../../book/src/environment.md")]
    pub struct Environment;
    #[doc = include_str!("../../../book/src/experiments.md")]
    pub struct Experiments;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
