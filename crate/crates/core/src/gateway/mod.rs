//! Chat completion and embedding backends.
//!
//! Everything above this layer talks to [`ChatBackend`] and [`EmbedBackend`]
//! trait objects, so the remote OpenAI-compatible client and the
//! deterministic offline backends are interchangeable.

mod embed;
mod record;
mod remote;
mod scripted;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use embed::{cosine_similarity, TrigramEmbedder, TRIGRAM_DIM};
pub use record::{CallRecord, RecordingBackend};
pub use remote::{OpenAiBackend, RemoteConfig, RetryPolicy};
pub use scripted::{prompt_digest, MatchKind, ScriptEntry, ScriptFixture, ScriptMode, ScriptedBackend};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited (retry after {retry_after_ms} ms)")]
    RateLimited { retry_after_ms: u64 },
    #[error("no script entry matches prompt {digest}")]
    ScriptMiss { digest: String },
    #[error("{count} script entries match prompt {digest}")]
    ScriptAmbiguous { digest: String, count: usize },
    #[error("invalid messages: {0}")]
    InvalidMessages(String),
    #[error("invalid embedding input: {0}")]
    InvalidInput(String),
    #[error("vector dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("zero vector")]
    ZeroVector,
    #[error("backend refused: {0}")]
    Refused(String),
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("backend not configured: {0}")]
    NotConfigured(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub stop_sequences: Vec<String>,
}

impl Default for ChatParams {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_tokens: 1024,
            stop_sequences: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub backend_id: String,
    pub latency_ms: u64,
    pub token_estimate: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub model_id: String,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>, model_id: impl Into<String>) -> Self {
        Self { values, model_id: model_id.into() }
    }
}

pub trait ChatBackend: Send + Sync {
    fn id(&self) -> String;

    fn chat(&self, messages: &[ChatMessage], params: &ChatParams) -> Result<Completion, GatewayError>;
}

pub trait EmbedBackend: Send + Sync {
    fn model_id(&self) -> String;

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError>;
}

/// Message list must be nonempty, start with System or User, and carry
/// content on every User and Tool message.
pub fn validate_messages(messages: &[ChatMessage]) -> Result<(), GatewayError> {
    let first = messages
        .first()
        .ok_or_else(|| GatewayError::InvalidMessages("no messages".into()))?;
    if !matches!(first.role, Role::System | Role::User) {
        return Err(GatewayError::InvalidMessages(format!(
            "conversation starts with {:?}",
            first.role
        )));
    }
    for (i, m) in messages.iter().enumerate() {
        if matches!(m.role, Role::User | Role::Tool) && m.content.trim().is_empty() {
            return Err(GatewayError::InvalidMessages(format!(
                "message {i} ({:?}) is empty",
                m.role
            )));
        }
    }
    Ok(())
}

pub(crate) fn validate_texts(texts: &[String]) -> Result<(), GatewayError> {
    if texts.is_empty() {
        return Err(GatewayError::InvalidInput("no texts".into()));
    }
    if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
        return Err(GatewayError::InvalidInput(format!("text {i} is empty")));
    }
    Ok(())
}

/// Rough token count: one token per four characters.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

/// Chat backend built from a closure. The closure must be a pure function
/// of the messages for replay determinism to hold.
pub struct FnBackend<F> {
    id: String,
    respond: F,
}

impl<F> FnBackend<F>
where
    F: Fn(&[ChatMessage]) -> Result<String, GatewayError> + Send + Sync,
{
    pub fn new(id: impl Into<String>, respond: F) -> Self {
        Self { id: id.into(), respond }
    }
}

impl<F> ChatBackend for FnBackend<F>
where
    F: Fn(&[ChatMessage]) -> Result<String, GatewayError> + Send + Sync,
{
    fn id(&self) -> String {
        self.id.clone()
    }

    fn chat(&self, messages: &[ChatMessage], _params: &ChatParams) -> Result<Completion, GatewayError> {
        validate_messages(messages)?;
        let text = (self.respond)(messages)?;
        Ok(Completion {
            token_estimate: estimate_tokens(&text),
            text,
            backend_id: self.id.clone(),
            latency_ms: 0,
        })
    }
}

/// Content of the last user message, if any.
pub fn last_user_message(messages: &[ChatMessage]) -> Option<&str> {
    messages
        .iter()
        .rev()
        .find(|m| m.role == Role::User)
        .map(|m| m.content.as_str())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn message_validation() {
        assert!(validate_messages(&[]).is_err());
        assert!(validate_messages(&[ChatMessage::assistant("hi")]).is_err());
        assert!(validate_messages(&[ChatMessage::user("  ")]).is_err());
        assert!(validate_messages(&[ChatMessage::system(""), ChatMessage::user("q")]).is_ok());
    }

    #[test]
    fn token_estimate_rounds_up() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("abcde"), 2);
    }
}
