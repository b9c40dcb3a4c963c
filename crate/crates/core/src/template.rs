//! Prompt templates with `{name}` placeholders.
//!
//! A placeholder is an opening brace, a lowercase identifier (`[a-z_]+`) and a
//! closing brace. Any other brace is literal text, which lets templates embed
//! JSON examples such as `{ "id": [...] }` without escaping.
//!
//! Rendering is single-pass: substituted values are never rescanned, so a task
//! description that happens to contain `{task}` is emitted as-is.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use regex::Regex;
use std::sync::OnceLock;

use crate::error::TemplateError;

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([a-z_]+)\}").expect("valid placeholder regex"))
}

/// A named prompt template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    name: String,
    text: String,
}

impl Template {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            text: text.into(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for cap in placeholder_re().captures_iter(&self.text) {
            let name = cap[1].to_string();
            if !seen.contains(&name) {
                seen.push(name);
            }
        }
        seen
    }

    /// Substitutes every placeholder.
    ///
    /// Each key in `values` must appear in the template and every placeholder in
    /// the template must have a value.
    pub fn render(&self, values: &[(&str, &str)]) -> Result<String, TemplateError> {
        let map: BTreeMap<&str, &str> = values.iter().copied().collect();
        let present = self.placeholders();
        for key in map.keys() {
            if !present.iter().any(|p| p == key) {
                return Err(TemplateError::MissingPlaceholder {
                    template: self.name.clone(),
                    placeholder: (*key).to_string(),
                });
            }
        }
        if let Some(unbound) = present.iter().find(|p| !map.contains_key(p.as_str())) {
            return Err(TemplateError::UnboundPlaceholder {
                template: self.name.clone(),
                placeholder: unbound.clone(),
            });
        }

        let mut out = String::with_capacity(self.text.len());
        let mut last = 0;
        for cap in placeholder_re().captures_iter(&self.text) {
            let whole = cap.get(0).expect("group 0");
            out.push_str(&self.text[last..whole.start()]);
            out.push_str(map[&cap[1]]);
            last = whole.end();
        }
        out.push_str(&self.text[last..]);
        Ok(out)
    }
}

/// Returns placeholder-shaped tokens left in rendered text.
pub fn residual_placeholders(text: &str) -> Vec<String> {
    placeholder_re()
        .find_iter(text)
        .map(|m| m.as_str().to_string())
        .collect()
}

const GENERATION: &str = include_str!("../templates/heuristic_generation.txt");
const RETRIEVAL: &str = include_str!("../templates/heuristic_retrieval.txt");
const SELF_ASSESSMENT: &str = include_str!("../templates/self_assessment.txt");
const SYSTEM_PROMPT: &str = include_str!("../templates/system_prompt.txt");

/// File names looked up by [`Templates::load_dir`].
pub const GENERATION_FILE: &str = "heuristic_generation.txt";
pub const RETRIEVAL_FILE: &str = "heuristic_retrieval.txt";
pub const SELF_ASSESSMENT_FILE: &str = "self_assessment.txt";
pub const SYSTEM_PROMPT_FILE: &str = "system_prompt.txt";

/// The set of templates used by a run.
#[derive(Debug, Clone)]
pub struct Templates {
    /// Heuristic generation prompt (`task_info`, `validation_info`, `trajectory_text`).
    pub generation: Template,
    /// Heuristic retrieval prompt (`k`, `heuristics_list`, `task`).
    pub retrieval: Template,
    /// Reward-free outcome prompt (`task_info`, `trajectory_text`).
    pub self_assessment: Template,
    /// Base system prompt for the agent; no placeholders.
    pub system_prompt: String,
}

impl Default for Templates {
    fn default() -> Self {
        Self::builtin()
    }
}

impl Templates {
    /// Templates compiled into the crate from `templates/`.
    pub fn builtin() -> Self {
        Self {
            generation: Template::new(GENERATION_FILE, GENERATION),
            retrieval: Template::new(RETRIEVAL_FILE, RETRIEVAL),
            self_assessment: Template::new(SELF_ASSESSMENT_FILE, SELF_ASSESSMENT),
            system_prompt: SYSTEM_PROMPT.to_string(),
        }
    }

    /// Loads templates from `dir`; files that are absent fall back to the
    /// built-in copy.
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut templates = Self::builtin();
        let read = |file: &str| -> Result<Option<String>, TemplateError> {
            let path = dir.join(file);
            if !path.exists() {
                return Ok(None);
            }
            fs::read_to_string(&path)
                .map(Some)
                .map_err(|source| TemplateError::Io { path, source })
        };
        if let Some(text) = read(GENERATION_FILE)? {
            templates.generation = Template::new(GENERATION_FILE, text);
        }
        if let Some(text) = read(RETRIEVAL_FILE)? {
            templates.retrieval = Template::new(RETRIEVAL_FILE, text);
        }
        if let Some(text) = read(SELF_ASSESSMENT_FILE)? {
            templates.self_assessment = Template::new(SELF_ASSESSMENT_FILE, text);
        }
        if let Some(text) = read(SYSTEM_PROMPT_FILE)? {
            templates.system_prompt = text;
        }
        templates.check()?;
        Ok(templates)
    }

    /// Verifies each template carries the placeholders its caller binds.
    pub fn check(&self) -> Result<(), TemplateError> {
        let expect = |t: &Template, names: &[&str]| -> Result<(), TemplateError> {
            let present = t.placeholders();
            for name in names {
                if !present.iter().any(|p| p == name) {
                    return Err(TemplateError::MissingPlaceholder {
                        template: t.name().to_string(),
                        placeholder: (*name).to_string(),
                    });
                }
            }
            Ok(())
        };
        expect(
            &self.generation,
            &["task_info", "validation_info", "trajectory_text"],
        )?;
        expect(&self.retrieval, &["k", "heuristics_list", "task"])?;
        expect(&self.self_assessment, &["task_info", "trajectory_text"])?;
        Ok(())
    }
}
