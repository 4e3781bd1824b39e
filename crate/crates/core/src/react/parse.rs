use std::collections::BTreeMap;

use serde_json::Value;

use super::{ToolCall, ToolRegistry};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    Call(ToolCall),
    Final(String),
    /// Diagnostic quoted back to the model.
    Failure(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedAction {
    pub thought: String,
    pub step: Step,
}

fn marker<'a>(line: &'a str, name: &str) -> Option<&'a str> {
    let t = line.trim_start().trim_start_matches("**");
    let rest = t.strip_prefix(name)?;
    let rest = rest.strip_prefix("**").unwrap_or(rest);
    rest.strip_prefix(':').map(|r| r.trim_start_matches("**").trim())
}

/// Parses one model reply against the registry. Never fails: malformed
/// replies come back as [`Step::Failure`] with a diagnostic.
pub fn parse_action(raw: &str, registry: &ToolRegistry) -> ParsedAction {
    let lines: Vec<&str> = raw.lines().collect();
    let thought = lines
        .iter()
        .position(|l| marker(l, "Thought").is_some())
        .map(|i| {
            let mut t = vec![marker(lines[i], "Thought").unwrap_or_default()];
            t.extend(
                lines[i + 1..]
                    .iter()
                    .take_while(|l| marker(l, "Action").is_none() && marker(l, "Final Answer").is_none())
                    .map(|l| l.trim()),
            );
            t.join("\n").trim().to_string()
        })
        .unwrap_or_default();
    let step = parse_step(&lines, registry);
    ParsedAction { thought, step }
}

fn parse_step(lines: &[&str], registry: &ToolRegistry) -> Step {
    let actions: Vec<usize> = (0..lines.len()).filter(|&i| marker(lines[i], "Action").is_some()).collect();
    let finals: Vec<usize> = (0..lines.len()).filter(|&i| marker(lines[i], "Final Answer").is_some()).collect();
    match (actions.len(), finals.first()) {
        (0, None) => Step::Failure("no `Action:` or `Final Answer:` line found".into()),
        (0, Some(&i)) => {
            let mut text = vec![marker(lines[i], "Final Answer").unwrap_or_default()];
            text.extend(lines[i + 1..].iter().copied());
            let text = text.join("\n").trim().to_string();
            if text.is_empty() {
                Step::Failure("`Final Answer:` is empty".into())
            } else {
                Step::Final(text)
            }
        }
        (1, None) => parse_call(lines, actions[0], registry),
        (1, Some(_)) => Step::Failure("reply has both an `Action:` and a `Final Answer:`; give one".into()),
        (n, _) => Step::Failure(format!("reply has {n} `Action:` lines; give exactly one")),
    }
}

fn parse_call(lines: &[&str], at: usize, registry: &ToolRegistry) -> Step {
    let tool = marker(lines[at], "Action").unwrap_or_default().trim_matches('`').trim();
    if tool.is_empty() {
        return Step::Failure("`Action:` names no tool".into());
    }
    let Some(spec) = registry.spec(tool) else {
        let known: Vec<&str> = registry.specs().map(|s| s.name.as_str()).collect();
        return Step::Failure(format!("unknown tool {tool:?}; available: {}", known.join(", ")));
    };
    let raw_args = match fenced_block(&lines[at + 1..]) {
        Ok(Some(body)) => match serde_json::from_str::<Value>(&body) {
            Ok(Value::Object(map)) => map,
            Ok(_) => return Step::Failure("arguments must be a JSON object".into()),
            Err(e) => return Step::Failure(format!("arguments are not valid JSON: {e}")),
        },
        Ok(None) => Default::default(),
        Err(e) => return Step::Failure(e),
    };
    let mut args = BTreeMap::new();
    for (name, value) in raw_args {
        let Some(param) = spec.params.iter().find(|p| p.name == name) else {
            return Step::Failure(format!("unknown parameter {name:?} for {tool}"));
        };
        let text = match value {
            Value::Null => continue,
            Value::String(s) => s,
            Value::Number(n) => n.to_string(),
            Value::Bool(b) => b.to_string(),
            other => return Step::Failure(format!("parameter {name:?} must be a scalar, got {other}")),
        };
        match param.ty.coerce(&text) {
            Ok(v) => {
                args.insert(name, v);
            }
            Err(why) => return Step::Failure(format!("parameter {name:?}: {why}")),
        }
    }
    for p in spec.params.iter().filter(|p| p.required) {
        if !args.contains_key(&p.name) {
            return Step::Failure(format!("missing required parameter {:?} for {tool}", p.name));
        }
    }
    Step::Call(ToolCall {
        tool: tool.to_string(),
        args,
    })
}

/// Body of the first ``` fence, if any.
fn fenced_block(lines: &[&str]) -> Result<Option<String>, String> {
    let Some(open) = lines.iter().position(|l| l.trim_start().starts_with("```")) else {
        return Ok(None);
    };
    let rest = &lines[open + 1..];
    let Some(close) = rest.iter().position(|l| l.trim() == "```") else {
        return Err("argument fence is not closed".into());
    };
    Ok(Some(rest[..close].join("\n")))
}

/// Renders a call in the action grammar; `parse_action` inverts it.
pub fn render_action(call: &ToolCall) -> String {
    let args: serde_json::Map<String, Value> =
        call.args.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect();
    format!(
        "Action: {}\n```json\n{}\n```",
        call.tool,
        serde_json::to_string(&Value::Object(args)).expect("string map serializes")
    )
}
