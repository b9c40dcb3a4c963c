//! A ReAct-style tool-using agent.
//!
//! Each turn the model either calls one tool or ends the episode with a line
//! starting `FINAL ANSWER:`. Tool errors and malformed turns are fed back as
//! observations starting `Error:` so the model can recover.

mod guidance;
mod trajectory;

use crate::env::{invoke, tool_schemas, verify, Scenario, Universe, WorldState};
use crate::error::GatewayError;
use crate::gateway::{ChatMessage, ChatParams, Gateway, StepLabel, ToolCall, ToolSchema};
use crate::pool::Outcome;

pub use guidance::{
    compose_system_prompt, render_fewshot_block, render_fewshot_block_with, render_fewshot_item,
    GuidanceKind, GuidancePayload, EXAMPLES_BEGIN, EXAMPLES_END, LESSONS_BEGIN, LESSONS_END,
};
pub use trajectory::{
    truncate_head, Action, Step, Trajectory, TrajectoryRecord, DEFAULT_OBSERVATION_BUDGET,
};

pub const FINAL_ANSWER: &str = "FINAL ANSWER:";
pub const DEFAULT_MAX_TURNS: usize = 40;

const MALFORMED_OBSERVATION: &str = "Error: Your reply contained neither a tool call nor a final answer. \
Call exactly one tool, or reply with a line starting with \"FINAL ANSWER:\".";

/// What the model did on one turn.
#[derive(Debug, Clone, PartialEq)]
pub enum ParsedAction {
    Tool { thought: String, call: ToolCall },
    Final { thought: String, answer: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MalformedAction {
    pub thought: String,
}

/// Classifies an assistant message. A structured tool call wins over any text;
/// otherwise the first line starting with `FINAL ANSWER:` (any case) ends the
/// episode, and everything above it is the thought.
pub fn parse_action(message: &ChatMessage) -> Result<ParsedAction, MalformedAction> {
    let thought_of = |s: &str| s.trim().to_string();
    if let Some(call) = &message.tool_call {
        return Ok(ParsedAction::Tool {
            thought: thought_of(&message.content),
            call: call.clone(),
        });
    }
    let text = &message.content;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim_start();
        let lead = line.len() - trimmed.len();
        if trimmed.len() >= FINAL_ANSWER.len()
            && trimmed.is_char_boundary(FINAL_ANSWER.len())
            && trimmed[..FINAL_ANSWER.len()].eq_ignore_ascii_case(FINAL_ANSWER)
        {
            let answer_start = offset + lead + FINAL_ANSWER.len();
            return Ok(ParsedAction::Final {
                thought: thought_of(&text[..offset]),
                answer: text[answer_start..].trim().to_string(),
            });
        }
        offset += line.len();
    }
    Err(MalformedAction {
        thought: thought_of(text),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub max_turns: usize,
    pub temperature: Option<f64>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            max_turns: DEFAULT_MAX_TURNS,
            temperature: None,
        }
    }
}

/// A finished episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub scenario_id: String,
    pub run: usize,
    pub trajectory: Trajectory,
    pub outcome: Outcome,
    pub final_state: WorldState,
    pub system_prompt: String,
}

/// Routing hint for rollout calls: scenario id, then run index.
pub fn rollout_session(scenario_id: &str, run: usize) -> [String; 2] {
    [scenario_id.to_string(), format!("run{run}")]
}

/// Runs one episode of `scenario` on a fresh copy of `universe`.
///
/// Only backend failures are errors. Reaching `max_turns` ends the episode
/// without a final answer, which the checks will usually score as failure.
pub fn run_episode(
    gateway: &Gateway,
    base_prompt: &str,
    guidance: &GuidancePayload,
    scenario: &Scenario,
    universe: &Universe,
    config: &AgentConfig,
    run: usize,
) -> Result<Episode, GatewayError> {
    let system_prompt = compose_system_prompt(base_prompt, guidance);
    let tools: Vec<ToolSchema> = tool_schemas();
    let mut params =
        ChatParams::new(StepLabel::Rollout).session(rollout_session(&scenario.scenario_id, run));
    params.temperature = config.temperature;

    let mut state = universe.working_copy();
    let mut messages = vec![
        ChatMessage::system(system_prompt.clone()),
        ChatMessage::user(scenario.task.clone()),
    ];
    let mut trajectory = Trajectory::default();

    while trajectory.turn_count < config.max_turns {
        let reply = gateway.chat(&messages, &tools, &params)?.message;
        trajectory.turn_count += 1;
        match parse_action(&reply) {
            Ok(ParsedAction::Final { thought, answer }) => {
                messages.push(reply);
                trajectory.steps.push(Step {
                    thought,
                    action: None,
                    observation: None,
                });
                trajectory.final_answer = Some(answer);
                break;
            }
            Ok(ParsedAction::Tool { thought, mut call }) => {
                let observation = match invoke(&mut state, &call.name, &call.arguments) {
                    Ok(out) => out,
                    Err(e) => format!("Error: {e}"),
                };
                let id = call
                    .id
                    .get_or_insert_with(|| format!("call_{}", trajectory.turn_count))
                    .clone();
                log::debug!(
                    "{} run {} turn {}: {}",
                    scenario.scenario_id,
                    run,
                    trajectory.turn_count,
                    call.name
                );
                trajectory.steps.push(Step {
                    thought: thought.clone(),
                    action: Some(Action {
                        tool: call.name.clone(),
                        arguments: call.arguments.clone(),
                    }),
                    observation: Some(observation.clone()),
                });
                messages.push(ChatMessage::assistant_tool_call(reply.content, call));
                messages.push(ChatMessage::tool(id, observation));
            }
            Err(MalformedAction { thought }) => {
                trajectory.steps.push(Step {
                    thought,
                    action: None,
                    observation: Some(MALFORMED_OBSERVATION.into()),
                });
                if !reply.content.is_empty() {
                    messages.push(reply);
                }
                messages.push(ChatMessage::user(MALFORMED_OBSERVATION));
            }
        }
    }

    let outcome = verify(scenario, &state, trajectory.final_answer.as_deref());
    Ok(Episode {
        scenario_id: scenario.scenario_id.clone(),
        run,
        trajectory,
        outcome,
        final_state: state,
        system_prompt,
    })
}
