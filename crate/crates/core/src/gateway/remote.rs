//! OpenAI-compatible HTTP backend (`/v1/chat/completions`, `/v1/embeddings`).

use std::time::{Duration, Instant};

use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;
use serde::Deserialize;
use serde_json::json;

use super::{
    estimate_tokens, validate_messages, validate_texts, ChatBackend, ChatMessage, ChatParams,
    Completion, EmbedBackend, EmbeddingVector, GatewayError,
};

pub const ENV_BASE_URL: &str = "MEDOS_LLM_BASE_URL";
pub const ENV_API_KEY: &str = "MEDOS_LLM_API_KEY";
pub const ENV_MODEL: &str = "MEDOS_LLM_MODEL";
pub const ENV_EMBED_MODEL: &str = "MEDOS_EMBED_MODEL";

const CHAT_TIMEOUT: Duration = Duration::from_secs(60);
const EMBED_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetryPolicy {
    pub base_delay: Duration,
    pub factor: u32,
    pub max_retries: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            base_delay: Duration::from_millis(500),
            factor: 2,
            max_retries: 3,
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, retry: u32) -> Duration {
        self.base_delay * self.factor.pow(retry)
    }
}

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub embed_model: String,
    pub retry: RetryPolicy,
}

impl RemoteConfig {
    pub fn from_env() -> Result<Self, GatewayError> {
        let base_url = std::env::var(ENV_BASE_URL)
            .map_err(|_| GatewayError::NotConfigured(format!("{ENV_BASE_URL} is not set")))?;
        Ok(Self {
            base_url,
            api_key: std::env::var(ENV_API_KEY).ok(),
            model: std::env::var(ENV_MODEL).unwrap_or_else(|_| "gpt-4o-mini".into()),
            embed_model: std::env::var(ENV_EMBED_MODEL)
                .unwrap_or_else(|_| "text-embedding-3-small".into()),
            retry: RetryPolicy::default(),
        })
    }
}

pub struct OpenAiBackend {
    config: RemoteConfig,
    client: Client,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: Option<String>,
    #[serde(default)]
    refusal: Option<String>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    index: usize,
    embedding: Vec<f64>,
}

enum Attempt<T> {
    Done(T),
    Retry(GatewayError, Option<Duration>),
    Fail(GatewayError),
}

impl OpenAiBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, GatewayError> {
        let client = Client::builder()
            .build()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        Ok(Self { config, client })
    }

    fn url(&self, path: &str) -> String {
        let base = self.config.base_url.trim_end_matches('/');
        let base = base.strip_suffix("/v1").unwrap_or(base);
        format!("{base}/v1/{path}")
    }

    /// Runs `send` with exponential backoff: at most `max_retries + 1` attempts.
    fn with_retries<T>(&self, mut send: impl FnMut() -> Attempt<T>) -> Result<T, GatewayError> {
        let mut retry = 0;
        loop {
            match send() {
                Attempt::Done(v) => return Ok(v),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(e, hint) => {
                    if retry >= self.config.retry.max_retries {
                        return Err(e);
                    }
                    let wait = hint
                        .unwrap_or_default()
                        .max(self.config.retry.delay(retry));
                    tracing::warn!(error = %e, retry, ?wait, "retrying backend call");
                    std::thread::sleep(wait);
                    retry += 1;
                }
            }
        }
    }

    fn post(&self, path: &str, body: &serde_json::Value, timeout: Duration) -> Attempt<Response> {
        let mut req = self.client.post(self.url(path)).timeout(timeout).json(body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(GatewayError::Transport(e.to_string()), None),
        };
        let status = resp.status();
        if status == StatusCode::TOO_MANY_REQUESTS {
            let retry_after = resp
                .headers()
                .get("retry-after")
                .and_then(|v| v.to_str().ok())
                .and_then(|s| s.trim().parse::<u64>().ok())
                .map(Duration::from_secs);
            let ms = retry_after.map(|d| d.as_millis() as u64).unwrap_or(0);
            return Attempt::Retry(GatewayError::RateLimited { retry_after_ms: ms }, retry_after);
        }
        if status.is_server_error() {
            return Attempt::Retry(GatewayError::Transport(format!("HTTP {status}")), None);
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Attempt::Fail(GatewayError::Transport(format!("HTTP {status}: {text}")));
        }
        Attempt::Done(resp)
    }
}

impl ChatBackend for OpenAiBackend {
    fn id(&self) -> String {
        format!("openai-compatible:{}", self.config.model)
    }

    fn chat(&self, messages: &[ChatMessage], params: &ChatParams) -> Result<Completion, GatewayError> {
        validate_messages(messages)?;
        let mut body = json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        });
        if !params.stop_sequences.is_empty() {
            body["stop"] = json!(params.stop_sequences);
        }
        let started = Instant::now();
        let parsed: ChatResponse = self.with_retries(|| match self.post("chat/completions", &body, CHAT_TIMEOUT) {
            Attempt::Done(resp) => match resp.json::<ChatResponse>() {
                Ok(p) => Attempt::Done(p),
                Err(e) => Attempt::Fail(GatewayError::Malformed(e.to_string())),
            },
            Attempt::Retry(e, h) => Attempt::Retry(e, h),
            Attempt::Fail(e) => Attempt::Fail(e),
        })?;
        let message = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| GatewayError::Malformed("no choices".into()))?
            .message;
        let text = message.content.unwrap_or_default();
        if text.trim().is_empty() {
            return Err(GatewayError::Refused(
                message.refusal.unwrap_or_else(|| "empty completion".into()),
            ));
        }
        Ok(Completion {
            token_estimate: estimate_tokens(&text),
            text,
            backend_id: self.id(),
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }
}

impl EmbedBackend for OpenAiBackend {
    fn model_id(&self) -> String {
        self.config.embed_model.clone()
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        validate_texts(texts)?;
        let body = json!({ "model": self.config.embed_model, "input": texts });
        let parsed: EmbeddingResponse = self.with_retries(|| match self.post("embeddings", &body, EMBED_TIMEOUT) {
            Attempt::Done(resp) => match resp.json::<EmbeddingResponse>() {
                Ok(p) => Attempt::Done(p),
                Err(e) => Attempt::Fail(GatewayError::Malformed(e.to_string())),
            },
            Attempt::Retry(e, h) => Attempt::Retry(e, h),
            Attempt::Fail(e) => Attempt::Fail(e),
        })?;
        let mut data = parsed.data;
        data.sort_by_key(|d| d.index);
        if data.len() != texts.len() {
            return Err(GatewayError::Malformed(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                data.len()
            )));
        }
        let dim = data[0].embedding.len();
        if data.iter().any(|d| d.embedding.len() != dim || d.embedding.iter().any(|x| !x.is_finite())) {
            return Err(GatewayError::Malformed("inconsistent or non-finite embeddings".into()));
        }
        Ok(data
            .into_iter()
            .map(|d| EmbeddingVector::new(d.embedding, self.config.embed_model.clone()))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::serve;

    /// Serves `responses` in order, repeating the last one.
    fn mock(responses: Vec<(u16, &'static str)>) -> crate::testutil::MockServer {
        serve(move |i, _| {
            let (status, body) = responses[i.min(responses.len() - 1)];
            (status, body.to_string())
        })
    }

    fn backend(url: &str) -> OpenAiBackend {
        OpenAiBackend::new(RemoteConfig {
            base_url: url.to_string(),
            api_key: Some("k".into()),
            model: "m".into(),
            embed_model: "e".into(),
            retry: RetryPolicy {
                base_delay: Duration::from_millis(1),
                factor: 2,
                max_retries: 3,
            },
        })
        .unwrap()
    }

    #[test]
    fn backoff_schedule() {
        let p = RetryPolicy::default();
        let delays: Vec<u64> = (0..3).map(|r| p.delay(r).as_millis() as u64).collect();
        assert_eq!(delays, vec![500, 1000, 2000]);
    }

    #[test]
    fn chat_wire_shape() {
        let server = mock(vec![(200, r#"{"choices":[{"message":{"role":"assistant","content":"hello"}}]}"#)]);
        let c = backend(&server.url)
            .chat(&[ChatMessage::user("hi")], &ChatParams::default())
            .unwrap();
        assert_eq!(c.text, "hello");
        let reqs = server.requests.lock().unwrap();
        assert_eq!(reqs.len(), 1);
        assert_eq!(reqs[0].target, "/v1/chat/completions");
        let sent: serde_json::Value = serde_json::from_str(&reqs[0].body).unwrap();
        assert_eq!(sent["messages"][0]["role"], "user");
        assert_eq!(sent["temperature"], 0.0);
    }

    #[test]
    fn retries_at_most_four_attempts() {
        let server = mock(vec![(500, "{}")]);
        let err = backend(&server.url)
            .chat(&[ChatMessage::user("hi")], &ChatParams::default())
            .unwrap_err();
        assert!(matches!(err, GatewayError::Transport(_)));
        assert_eq!(server.count(), 4);
    }

    #[test]
    fn recovers_after_transient_failure() {
        let ok = r#"{"data":[{"index":1,"embedding":[0.0,1.0]},{"index":0,"embedding":[1.0,0.0]}]}"#;
        let server = mock(vec![(503, "{}"), (200, ok)]);
        let out = backend(&server.url).embed(&["a".into(), "b".into()]).unwrap();
        assert_eq!(out[0].values, vec![1.0, 0.0]);
        assert_eq!(server.count(), 2);
        assert_eq!(server.requests.lock().unwrap()[1].target, "/v1/embeddings");
    }

    #[test]
    fn client_errors_are_not_retried() {
        let server = mock(vec![(400, r#"{"error":"bad"}"#)]);
        assert!(backend(&server.url).chat(&[ChatMessage::user("hi")], &ChatParams::default()).is_err());
        assert_eq!(server.count(), 1);
    }

    #[test]
    fn rate_limit_surfaces_after_retries() {
        let server = mock(vec![(429, "{}")]);
        let err = backend(&server.url)
            .chat(&[ChatMessage::user("hi")], &ChatParams::default())
            .unwrap_err();
        assert!(matches!(err, GatewayError::RateLimited { .. }));
        assert_eq!(server.count(), 4);
    }

    #[test]
    fn refusal_is_an_error() {
        let server = mock(vec![(200, r#"{"choices":[{"message":{"content":null,"refusal":"no"}}]}"#)]);
        let err = backend(&server.url)
            .chat(&[ChatMessage::user("hi")], &ChatParams::default())
            .unwrap_err();
        assert_eq!(err, GatewayError::Refused("no".into()));
    }
}
