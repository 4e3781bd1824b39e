use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{
    estimate_tokens, last_user_message, validate_messages, ChatBackend, ChatMessage, ChatParams,
    Completion, GatewayError,
};

/// SHA-256 over the JSON serialization of the message list.
pub fn prompt_digest(messages: &[ChatMessage]) -> String {
    let bytes = serde_json::to_vec(messages).expect("messages serialize");
    crate::store::digest(&bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchKind {
    /// Exact [`prompt_digest`] of the whole request.
    Digest,
    /// Regex searched in the last user message.
    Regex,
}

/// One fixture line: `{"match_kind": ..., "match_value": ..., "response": ...}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub match_kind: MatchKind,
    pub match_value: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptMode {
    Strict,
    Fallback(String),
}

#[derive(Debug, Clone)]
pub struct ScriptFixture {
    pub entries: Vec<ScriptEntry>,
    pub mode: ScriptMode,
}

impl ScriptFixture {
    pub fn new(entries: Vec<ScriptEntry>, mode: ScriptMode) -> Self {
        Self { entries, mode }
    }

    pub fn from_json(json: &str, mode: ScriptMode) -> Result<Self, GatewayError> {
        let entries = serde_json::from_str(json)
            .map_err(|e| GatewayError::Malformed(format!("script fixture: {e}")))?;
        Ok(Self { entries, mode })
    }

    pub fn load(path: &Path, mode: ScriptMode) -> Result<Self, GatewayError> {
        let json = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::NotConfigured(format!("{}: {e}", path.display())))?;
        Self::from_json(&json, mode)
    }
}

enum Matcher {
    Digest(String),
    Regex(Regex),
}

/// Replays fixture responses. Matching is stateless: the response is a pure
/// function of the request.
pub struct ScriptedBackend {
    matchers: Vec<(Matcher, String)>,
    mode: ScriptMode,
}

impl ScriptedBackend {
    pub fn new(fixture: ScriptFixture) -> Result<Self, GatewayError> {
        let matchers = fixture
            .entries
            .into_iter()
            .map(|e| {
                let m = match e.match_kind {
                    MatchKind::Digest => Matcher::Digest(e.match_value),
                    MatchKind::Regex => Matcher::Regex(Regex::new(&e.match_value).map_err(|err| {
                        GatewayError::Malformed(format!("bad regex {:?}: {err}", e.match_value))
                    })?),
                };
                Ok((m, e.response))
            })
            .collect::<Result<_, GatewayError>>()?;
        Ok(Self { matchers, mode: fixture.mode })
    }

    fn respond(&self, messages: &[ChatMessage]) -> Result<String, GatewayError> {
        let digest = prompt_digest(messages);
        let last_user = last_user_message(messages).unwrap_or("");
        let mut hits = self.matchers.iter().filter(|(m, _)| match m {
            Matcher::Digest(d) => *d == digest,
            Matcher::Regex(re) => re.is_match(last_user),
        });
        match &self.mode {
            ScriptMode::Fallback(default) => Ok(hits
                .next()
                .map(|(_, r)| r.clone())
                .unwrap_or_else(|| default.clone())),
            ScriptMode::Strict => {
                let all: Vec<_> = hits.collect();
                match all.as_slice() {
                    [(_, r)] => Ok(r.clone()),
                    [] => Err(GatewayError::ScriptMiss { digest }),
                    many => Err(GatewayError::ScriptAmbiguous { digest, count: many.len() }),
                }
            }
        }
    }
}

impl ChatBackend for ScriptedBackend {
    fn id(&self) -> String {
        "scripted".into()
    }

    fn chat(&self, messages: &[ChatMessage], _params: &ChatParams) -> Result<Completion, GatewayError> {
        validate_messages(messages)?;
        let text = self.respond(messages)?;
        if text.is_empty() {
            return Err(GatewayError::Refused("empty scripted response".into()));
        }
        Ok(Completion {
            token_estimate: estimate_tokens(&text),
            text,
            backend_id: self.id(),
            latency_ms: 0,
        })
    }
}
