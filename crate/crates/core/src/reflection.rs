//! Turning a finished episode into a stored heuristic.
//!
//! The reflection prompt asks the model for an `Analysis:` paragraph and a
//! `Learned Guideline:` with `Trigger:` and `Action:` parts. Parsing is
//! lenient: markers may carry list numbers or markdown emphasis, and any that
//! are missing leave their field empty. The full response is always kept in
//! `raw_text`, which is what retrieval and injection use.

use std::sync::OnceLock;

use regex::Regex;

use crate::agent::Trajectory;
use crate::clock::Clock;
use crate::error::ReflectionError;
use crate::gateway::{ChatMessage, ChatParams, Gateway, StepLabel};
use crate::pool::{Heuristic, Outcome, OutcomeSource};
use crate::template::Template;

/// One task attempt, ready for reflection.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub scenario_id: String,
    pub task: String,
    pub trajectory: Trajectory,
    pub outcome: Outcome,
    pub outcome_source: OutcomeSource,
}

impl Experience {
    pub fn validate(&self) -> Result<(), ReflectionError> {
        if self.scenario_id.trim().is_empty() {
            return Err(ReflectionError::Precondition("empty scenario_id".into()));
        }
        if self.task.trim().is_empty() {
            return Err(ReflectionError::Precondition("empty task".into()));
        }
        if self.trajectory.steps.is_empty() {
            return Err(ReflectionError::Precondition(format!(
                "trajectory of {} has no steps",
                self.scenario_id
            )));
        }
        Ok(())
    }
}

/// Text bound to the outcome slot of the generation prompt.
pub fn validation_text(outcome: Outcome, source: OutcomeSource) -> String {
    let verdict = match outcome {
        Outcome::Success => "SUCCESS",
        Outcome::Failure => "FAILURE",
    };
    match source {
        OutcomeSource::EnvReward => verdict.to_string(),
        OutcomeSource::SelfAssessed => format!("{verdict} (self-assessed, no external reward)"),
    }
}

pub fn build_reflection_prompt(
    template: &Template,
    task: &str,
    trajectory_text: &str,
    validation_text: &str,
) -> Result<String, ReflectionError> {
    for (name, value) in [
        ("task", task),
        ("trajectory_text", trajectory_text),
        ("validation_text", validation_text),
    ] {
        if value.trim().is_empty() {
            return Err(ReflectionError::Precondition(format!("{name} is empty")));
        }
    }
    Ok(template.render(&[
        ("task_info", task),
        ("validation_info", validation_text),
        ("trajectory_text", trajectory_text),
    ])?)
}

/// The structured parts of a reflection.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedReflection {
    pub analysis: String,
    pub trigger: String,
    pub action: String,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Marker {
    Analysis,
    Guideline,
    Trigger,
    Action,
    Other,
}

fn marker_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?i)^\s*(?:[-+>]\s*|\d+[.)]\s*)?[*_]*\s*(analysis|learned guidelines?|trigger|action|rationale|correction rule|best practice)\s*[*_]*\s*:\s*[*_]*\s*(.*)$",
        )
        .expect("valid marker regex")
    })
}

fn classify(word: &str) -> Marker {
    match word.to_ascii_lowercase().as_str() {
        "analysis" => Marker::Analysis,
        "trigger" => Marker::Trigger,
        "action" => Marker::Action,
        w if w.starts_with("learned guideline") => Marker::Guideline,
        _ => Marker::Other,
    }
}

fn clean(lines: &[&str]) -> String {
    let joined = lines.join("\n");
    let trimmed = joined.trim();
    let unwrapped = trimmed
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .unwrap_or(trimmed);
    unwrapped.trim().to_string()
}

/// Extracts analysis, trigger and action. Each field is the text after the
/// first line carrying its marker, up to the next marker line.
pub fn parse_reflection(text: &str) -> ParsedReflection {
    let mut sections: Vec<(Marker, Vec<&str>)> = Vec::new();
    for line in text.lines() {
        if let Some(cap) = marker_re().captures(line) {
            let marker = classify(&cap[1]);
            let rest = cap.get(2).map_or("", |m| m.as_str());
            sections.push((marker, vec![rest]));
        } else if let Some((_, body)) = sections.last_mut() {
            body.push(line);
        }
    }
    let first = |want: Marker| {
        sections
            .iter()
            .find(|(m, _)| *m == want)
            .map(|(_, body)| clean(body))
            .unwrap_or_default()
    };
    ParsedReflection {
        analysis: first(Marker::Analysis),
        trigger: first(Marker::Trigger),
        action: first(Marker::Action),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn parse_heuristic(
    text: &str,
    scenario_id: &str,
    task: &str,
    outcome: Outcome,
    outcome_source: OutcomeSource,
    clock: &dyn Clock,
) -> Result<Heuristic, ReflectionError> {
    if text.trim().is_empty() {
        return Err(ReflectionError::EmptyReflection);
    }
    let parsed = parse_reflection(text);
    Ok(Heuristic {
        scenario_id: scenario_id.to_string(),
        task: task.to_string(),
        outcome,
        outcome_source,
        analysis: parsed.analysis,
        guideline_trigger: parsed.trigger,
        guideline_action: parsed.action,
        raw_text: text.to_string(),
        created_at: clock.now(),
    })
}

fn verdict_line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)verdict\s*[*_]*\s*:\s*[*_]*\s*(success|failure)\b").expect("valid verdict regex")
    })
}

/// Reads the verdict of a self-assessment: the last `VERDICT: X` line, or a
/// response that is nothing but `SUCCESS` or `FAILURE`.
pub fn parse_verdict(text: &str) -> Result<Outcome, ReflectionError> {
    let from_word = |w: &str| Outcome::from_bool(w.eq_ignore_ascii_case("success"));
    if let Some(cap) = text
        .lines()
        .rev()
        .find_map(|line| verdict_line_re().captures(line))
    {
        return Ok(from_word(&cap[1]));
    }
    let bare = text
        .trim()
        .trim_matches(|c: char| c == '*' || c == '.' || c == '`' || c.is_whitespace());
    if bare.eq_ignore_ascii_case("success") || bare.eq_ignore_ascii_case("failure") {
        return Ok(from_word(bare));
    }
    Err(ReflectionError::UnparseableVerdict(
        text.chars().take(200).collect(),
    ))
}

/// Asks the model whether its own attempt succeeded.
pub fn infer_outcome(
    gateway: &Gateway,
    template: &Template,
    scenario_id: &str,
    task: &str,
    trajectory_text: &str,
) -> Result<Outcome, ReflectionError> {
    let prompt = template.render(&[("task_info", task), ("trajectory_text", trajectory_text)])?;
    let params = ChatParams::new(StepLabel::SelfAssessment).session([scenario_id]);
    let reply = gateway.chat(&[ChatMessage::user(prompt)], &[], &params)?;
    parse_verdict(&reply.message.content)
}

/// Builds the generation prompt, asks the model, and parses its reflection.
pub fn reflect(
    gateway: &Gateway,
    template: &Template,
    experience: &Experience,
    observation_budget: usize,
    clock: &dyn Clock,
) -> Result<Heuristic, ReflectionError> {
    experience.validate()?;
    let prompt = build_reflection_prompt(
        template,
        &experience.task,
        &experience.trajectory.render(observation_budget),
        &validation_text(experience.outcome, experience.outcome_source),
    )?;
    let params = ChatParams::new(StepLabel::Generation).session([experience.scenario_id.as_str()]);
    let reply = gateway.chat(&[ChatMessage::user(prompt)], &[], &params)?;
    parse_heuristic(
        &reply.message.content,
        &experience.scenario_id,
        &experience.task,
        experience.outcome,
        experience.outcome_source,
        clock,
    )
}
