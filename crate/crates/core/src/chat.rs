//! Minimal chat-completion client: request/response types, a blocking HTTP
//! transport, capped exponential retry and an in-flight request cap.

use std::collections::VecDeque;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const DEFAULT_API_KEY_ENV: &str = "PARLEY_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    /// Base URL; requests go to `{base_url}/chat/completions`.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub backoff_cap_ms: u64,
    pub max_in_flight: usize,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "https://api.openai.com/v1".to_string(),
            model: "gpt-4.1".to_string(),
            api_key_env: DEFAULT_API_KEY_ENV.to_string(),
            timeout_secs: 120,
            max_retries: 4,
            backoff_base_ms: 500,
            backoff_cap_ms: 8_000,
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "user".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tools: Option<Vec<Value>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tool_choice: Option<Value>,
}

impl ChatRequest {
    /// Plain-text request at temperature 0.
    pub fn text(model: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        ChatRequest {
            model: model.into(),
            messages,
            temperature: 0.0,
            tools: None,
            tool_choice: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToolCall {
    pub name: String,
    pub arguments: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatCompletion {
    pub content: Option<String>,
    pub tool_calls: Vec<ToolCall>,
    pub raw: String,
}

#[derive(Deserialize)]
struct RawResponse {
    choices: Vec<RawChoice>,
}

#[derive(Deserialize)]
struct RawChoice {
    message: RawMessage,
}

#[derive(Deserialize)]
struct RawMessage {
    #[serde(default)]
    content: Option<String>,
    #[serde(default)]
    tool_calls: Option<Vec<RawToolCall>>,
}

#[derive(Deserialize)]
struct RawToolCall {
    function: RawFunction,
}

#[derive(Deserialize)]
struct RawFunction {
    name: String,
    arguments: String,
}

impl ChatCompletion {
    pub fn parse(raw: &str) -> Result<Self, ChatError> {
        let decoded: RawResponse = serde_json::from_str(raw).map_err(|e| ChatError::Decode {
            reason: e.to_string(),
            raw: raw.to_string(),
        })?;
        let message = decoded
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| ChatError::Decode {
                reason: "response has no choices".into(),
                raw: raw.to_string(),
            })?
            .message;
        Ok(ChatCompletion {
            content: message.content,
            tool_calls: message
                .tool_calls
                .unwrap_or_default()
                .into_iter()
                .map(|c| ToolCall {
                    name: c.function.name,
                    arguments: c.function.arguments,
                })
                .collect(),
            raw: raw.to_string(),
        })
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("{message}")]
pub struct TransportError {
    pub retryable: bool,
    pub message: String,
}

impl TransportError {
    pub fn retryable(message: impl Into<String>) -> Self {
        TransportError {
            retryable: true,
            message: message.into(),
        }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        TransportError {
            retryable: false,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ChatError {
    #[error("chat endpoint failed after {attempts} attempt(s): {last}")]
    Transport { attempts: u32, last: String },
    #[error("undecodable chat response ({reason}): {raw}")]
    Decode { reason: String, raw: String },
    #[error("endpoint configuration: {0}")]
    Config(String),
}

/// Sends one JSON request body and returns the raw response body.
pub trait ChatTransport: Send + Sync {
    fn post(&self, body: &Value) -> Result<String, TransportError>;
}

pub struct HttpTransport {
    agent: ureq::Agent,
    url: String,
    token: Option<String>,
}

impl HttpTransport {
    pub fn new(cfg: &EndpointConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .build()
            .into();
        HttpTransport {
            agent,
            url: format!("{}/chat/completions", cfg.base_url.trim_end_matches('/')),
            token: std::env::var(&cfg.api_key_env).ok().filter(|t| !t.is_empty()),
        }
    }
}

impl ChatTransport for HttpTransport {
    fn post(&self, body: &Value) -> Result<String, TransportError> {
        let mut req = self.agent.post(&self.url);
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        match req.send_json(body) {
            Ok(mut resp) => resp
                .body_mut()
                .read_to_string()
                .map_err(|e| TransportError::retryable(e.to_string())),
            Err(ureq::Error::StatusCode(code)) => {
                let msg = format!("HTTP status {code}");
                if code == 429 || code >= 500 {
                    Err(TransportError::retryable(msg))
                } else {
                    Err(TransportError::fatal(msg))
                }
            }
            Err(e @ (ureq::Error::Io(_) | ureq::Error::Timeout(_) | ureq::Error::ConnectionFailed)) => {
                Err(TransportError::retryable(e.to_string()))
            }
            Err(e) => Err(TransportError::fatal(e.to_string())),
        }
    }
}

/// Counting gate bounding concurrent requests.
struct InFlightGate {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

impl InFlightGate {
    fn acquire(&self) -> GatePass<'_> {
        let mut active = self.active.lock().expect("gate lock");
        while *active >= self.limit {
            active = self.freed.wait(active).expect("gate lock");
        }
        *active += 1;
        GatePass(self)
    }
}

struct GatePass<'a>(&'a InFlightGate);

impl Drop for GatePass<'_> {
    fn drop(&mut self) {
        *self.0.active.lock().expect("gate lock") -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base: Duration,
    pub cap: Duration,
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy {
            max_retries: 0,
            base: Duration::ZERO,
            cap: Duration::ZERO,
        }
    }

    /// Delay before retry number `attempt` (0-based): `min(cap, base · 2^attempt)`.
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.base.saturating_mul(factor).min(self.cap)
    }
}

#[derive(Clone)]
pub struct ChatClient {
    transport: Arc<dyn ChatTransport>,
    retry: RetryPolicy,
    gate: Arc<InFlightGate>,
    model: String,
}

impl ChatClient {
    pub fn new(transport: Arc<dyn ChatTransport>, model: impl Into<String>, retry: RetryPolicy, max_in_flight: usize) -> Self {
        ChatClient {
            transport,
            retry,
            gate: Arc::new(InFlightGate {
                limit: max_in_flight.max(1),
                active: Mutex::new(0),
                freed: Condvar::new(),
            }),
            model: model.into(),
        }
    }

    /// HTTP client for `cfg`. The token variable may be unset for local
    /// endpoints that need no auth.
    pub fn from_config(cfg: &EndpointConfig) -> Result<Self, ChatError> {
        if cfg.base_url.trim().is_empty() {
            return Err(ChatError::Config("base_url is empty".into()));
        }
        if cfg.model.trim().is_empty() {
            return Err(ChatError::Config("model is empty".into()));
        }
        Ok(ChatClient::new(
            Arc::new(HttpTransport::new(cfg)),
            cfg.model.clone(),
            RetryPolicy {
                max_retries: cfg.max_retries,
                base: Duration::from_millis(cfg.backoff_base_ms),
                cap: Duration::from_millis(cfg.backoff_cap_ms),
            },
            cfg.max_in_flight,
        ))
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatCompletion, ChatError> {
        let body = serde_json::to_value(request).map_err(|e| ChatError::Config(e.to_string()))?;
        let mut attempt = 0;
        loop {
            let result = {
                let _pass = self.gate.acquire();
                self.transport.post(&body)
            };
            match result {
                Ok(raw) => return ChatCompletion::parse(&raw),
                Err(e) if e.retryable && attempt < self.retry.max_retries => {
                    log::warn!("chat request failed ({e}); retry {}", attempt + 1);
                    std::thread::sleep(self.retry.delay(attempt));
                    attempt += 1;
                }
                Err(e) => {
                    return Err(ChatError::Transport {
                        attempts: attempt + 1,
                        last: e.message,
                    })
                }
            }
        }
    }
}

/// Replays queued responses and records every request body.
#[derive(Default)]
pub struct MockTransport {
    responses: Mutex<VecDeque<Result<String, TransportError>>>,
    requests: Mutex<Vec<Value>>,
}

impl MockTransport {
    pub fn new(responses: impl IntoIterator<Item = Result<String, TransportError>>) -> Self {
        MockTransport {
            responses: Mutex::new(responses.into_iter().collect()),
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<Value> {
        self.requests.lock().expect("mock lock").clone()
    }
}

impl ChatTransport for MockTransport {
    fn post(&self, body: &Value) -> Result<String, TransportError> {
        self.requests.lock().expect("mock lock").push(body.clone());
        self.responses
            .lock()
            .expect("mock lock")
            .pop_front()
            .unwrap_or_else(|| Err(TransportError::fatal("mock transport exhausted")))
    }
}

/// Wraps content or a tool call in a chat-completion response body.
pub fn completion_body(content: Option<&str>, tool_call: Option<(&str, &str)>) -> String {
    let mut message = serde_json::json!({ "role": "assistant", "content": content });
    if let Some((name, arguments)) = tool_call {
        message["tool_calls"] = serde_json::json!([{
            "id": "call_0",
            "type": "function",
            "function": { "name": name, "arguments": arguments }
        }]);
    }
    serde_json::json!({ "choices": [{ "index": 0, "message": message, "finish_reason": "stop" }] }).to_string()
}
