//! The ReAct loop: a tool registry, the action grammar and a bounded
//! reason/act/observe runner that records every exchange.
//!
//! Model replies carry either one tool call,
//!
//! ````text
//! Thought: <optional reasoning>
//! Action: <tool_name>
//! ```json
//! {"param": "value"}
//! ```
//! ````
//!
//! or a `Final Answer: <text>` line. Arguments travel as strings and are
//! coerced against the declared [`ArgType`] of each parameter.

mod parse;
mod trace;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{ChatBackend, ChatMessage, ChatParams, GatewayError};

pub use parse::{parse_action, render_action, ParsedAction, Step};
pub use trace::{read_trace, trace_file_name, write_trace};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RegistryError {
    #[error("tool {0:?} is already registered")]
    DuplicateTool(String),
    #[error("invalid identifier {0:?}")]
    InvalidName(String),
    #[error("parameter {0:?} is declared twice")]
    DuplicateParam(String),
}

#[derive(Debug, Error)]
pub enum ReactError {
    #[error("tool registry is empty")]
    EmptyRegistry,
    #[error("goal is empty")]
    EmptyGoal,
    #[error(transparent)]
    Backend(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "values", rename_all = "lowercase")]
pub enum ArgType {
    String,
    Integer,
    Boolean,
    Enum(Vec<String>),
}

impl ArgType {
    /// Canonical string form of `raw`, or why it does not fit.
    pub fn coerce(&self, raw: &str) -> Result<String, String> {
        let t = raw.trim();
        match self {
            ArgType::String => Ok(raw.to_string()),
            ArgType::Integer => t
                .parse::<i64>()
                .map(|n| n.to_string())
                .map_err(|_| format!("{raw:?} is not an integer")),
            ArgType::Boolean => match t.to_ascii_lowercase().as_str() {
                "true" | "yes" => Ok("true".into()),
                "false" | "no" => Ok("false".into()),
                _ => Err(format!("{raw:?} is not a boolean")),
            },
            ArgType::Enum(values) => values
                .iter()
                .find(|v| v.eq_ignore_ascii_case(t))
                .cloned()
                .ok_or_else(|| format!("{raw:?} is not one of {}", values.join(", "))),
        }
    }
}

impl fmt::Display for ArgType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArgType::String => f.write_str("string"),
            ArgType::Integer => f.write_str("integer"),
            ArgType::Boolean => f.write_str("boolean"),
            ArgType::Enum(v) => write!(f, "one of [{}]", v.join(", ")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub ty: ArgType,
    pub required: bool,
}

impl ParamSpec {
    pub fn required(name: &str, ty: ArgType) -> Self {
        Self { name: name.into(), ty, required: true }
    }

    pub fn optional(name: &str, ty: ArgType) -> Self {
        Self { name: name.into(), ty, required: false }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub params: Vec<ParamSpec>,
    pub returns: String,
}

impl ToolSpec {
    pub fn new(name: &str, description: &str, params: Vec<ParamSpec>, returns: &str) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            params,
            returns: returns.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub tool: String,
    pub args: BTreeMap<String, String>,
}

impl ToolCall {
    pub fn arg(&self, name: &str) -> Option<&str> {
        self.args.get(name).map(String::as_str)
    }

    /// Integer argument; the parser has already checked the type.
    pub fn int(&self, name: &str) -> Option<i64> {
        self.arg(name).and_then(|v| v.parse().ok())
    }

    pub fn flag(&self, name: &str) -> Option<bool> {
        self.arg(name).map(|v| v == "true")
    }
}

pub fn is_identifier(name: &str) -> bool {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[a-z_][a-z0-9_]*$").unwrap()).is_match(name)
}

pub type ToolFn = Box<dyn Fn(&ToolCall) -> Result<String, String> + Send + Sync>;

#[derive(Default)]
pub struct ToolRegistry {
    tools: BTreeMap<String, (ToolSpec, ToolFn)>,
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        spec: ToolSpec,
        run: impl Fn(&ToolCall) -> Result<String, String> + Send + Sync + 'static,
    ) -> Result<(), RegistryError> {
        if !is_identifier(&spec.name) {
            return Err(RegistryError::InvalidName(spec.name));
        }
        for (i, p) in spec.params.iter().enumerate() {
            if !is_identifier(&p.name) {
                return Err(RegistryError::InvalidName(p.name.clone()));
            }
            if spec.params[..i].iter().any(|q| q.name == p.name) {
                return Err(RegistryError::DuplicateParam(p.name.clone()));
            }
        }
        if self.tools.contains_key(&spec.name) {
            return Err(RegistryError::DuplicateTool(spec.name));
        }
        self.tools.insert(spec.name.clone(), (spec, Box::new(run)));
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    pub fn spec(&self, name: &str) -> Option<&ToolSpec> {
        self.tools.get(name).map(|(s, _)| s)
    }

    /// Specs in catalog order (by name).
    pub fn specs(&self) -> impl Iterator<Item = &ToolSpec> {
        self.tools.values().map(|(s, _)| s)
    }

    /// Runs a parsed call. Errors and panics in the tool become text.
    pub fn invoke(&self, call: &ToolCall) -> Result<String, String> {
        let Some((_, run)) = self.tools.get(&call.tool) else {
            return Err(format!("unknown tool {:?}", call.tool));
        };
        match std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run(call))) {
            Ok(r) => r,
            Err(p) => Err(p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "tool panicked".into())),
        }
    }

    /// The catalog block of the system prompt, tools sorted by name.
    pub fn render_catalog(&self) -> String {
        let mut out = String::from("Available tools:\n");
        for spec in self.specs() {
            out.push_str(&format!("- {}: {}\n", spec.name, spec.description));
            for p in &spec.params {
                out.push_str(&format!(
                    "    {} ({}, {})\n",
                    p.name,
                    p.ty,
                    if p.required { "required" } else { "optional" }
                ));
            }
            out.push_str(&format!("    returns: {}\n", spec.returns));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    pub max_steps: usize,
    pub max_parse_failures: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_steps: 20,
            max_parse_failures: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceAction {
    ToolCall(ToolCall),
    FinalAnswer { text: String },
    ParseFailure { raw: String, diagnostic: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub index: usize,
    pub thought: String,
    pub action: TraceAction,
    pub observation: String,
    pub timestamp: DateTime<Utc>,
    /// The exact request sent for this step.
    pub request: Vec<ChatMessage>,
    /// The exact reply text.
    pub response: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExhaustReason {
    Steps,
    ParseFailures,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    FinalAnswer(String),
    Exhausted(ExhaustReason),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub outcome: Outcome,
    pub trace: Vec<TraceStep>,
}

impl Episode {
    pub fn final_answer(&self) -> Option<&str> {
        match &self.outcome {
            Outcome::FinalAnswer(t) => Some(t),
            Outcome::Exhausted(_) => None,
        }
    }
}

pub const GRAMMAR: &str = "Reply in exactly one of two forms.\n\
To use a tool:\n\
Thought: <your reasoning>\n\
Action: <tool_name>\n\
```json\n\
{\"<param>\": \"<value>\"}\n\
```\n\
To finish:\n\
Thought: <your reasoning>\n\
Final Answer: <answer>\n\
Use one tool per reply and wait for its observation.";

pub fn system_prompt(registry: &ToolRegistry) -> String {
    format!(
        "Task: react\nYou operate a hospital information system through tools. Work step by step.\n\n{}\n{GRAMMAR}",
        registry.render_catalog()
    )
}

/// Runs prompt → parse → execute → observe until a final answer or a limit.
pub fn run_episode(
    goal: &str,
    registry: &ToolRegistry,
    chat: &dyn ChatBackend,
    limits: Limits,
) -> Result<Episode, ReactError> {
    if registry.is_empty() {
        return Err(ReactError::EmptyRegistry);
    }
    if goal.trim().is_empty() {
        return Err(ReactError::EmptyGoal);
    }
    let params = ChatParams::default();
    let mut messages = vec![ChatMessage::system(system_prompt(registry)), ChatMessage::user(goal)];
    let mut trace = Vec::new();
    let mut failures = 0;
    while trace.len() < limits.max_steps {
        let request = messages.clone();
        let reply = chat.chat(&messages, &params)?;
        let parsed = parse_action(&reply.text, registry);
        let (action, observation) = match parsed.step {
            Step::Call(call) => {
                let observation = match registry.invoke(&call) {
                    Ok(out) => out,
                    Err(msg) => format!("tool_error: {msg}"),
                };
                (TraceAction::ToolCall(call), observation)
            }
            Step::Final(text) => (TraceAction::FinalAnswer { text }, String::new()),
            Step::Failure(diagnostic) => {
                failures += 1;
                let observation = format!("parse_error: {diagnostic}\n{GRAMMAR}");
                (
                    TraceAction::ParseFailure {
                        raw: reply.text.clone(),
                        diagnostic,
                    },
                    observation,
                )
            }
        };
        trace.push(TraceStep {
            index: trace.len() + 1,
            thought: parsed.thought,
            action: action.clone(),
            observation: observation.clone(),
            timestamp: Utc::now(),
            request,
            response: reply.text.clone(),
        });
        if let TraceAction::FinalAnswer { text } = action {
            return Ok(Episode {
                outcome: Outcome::FinalAnswer(text),
                trace,
            });
        }
        if failures >= limits.max_parse_failures {
            return Ok(Episode {
                outcome: Outcome::Exhausted(ExhaustReason::ParseFailures),
                trace,
            });
        }
        messages.push(ChatMessage::assistant(reply.text));
        messages.push(ChatMessage::user(format!("Observation: {observation}")));
    }
    Ok(Episode {
        outcome: Outcome::Exhausted(ExhaustReason::Steps),
        trace,
    })
}
