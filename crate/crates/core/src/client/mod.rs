//! Uniform chat-completion interface: remote OpenAI-compatible endpoints
//! plus a deterministic mock, with shared retry and mode-token handling.
//!
//! Every model call in this crate flows through [`ChatClient::complete`];
//! no other module constructs HTTP traffic.

mod http;
mod mock;

pub use http::HttpEndpoint;
pub use mock::{MockBehavior, MockClient};

use std::fmt;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Think mode emits an intermediate reasoning trace; no-think answers
/// directly. Selected by a token appended to the prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Think,
    NoThink,
}

impl Mode {
    pub fn token(self) -> &'static str {
        match self {
            Mode::Think => "/think",
            Mode::NoThink => "/no_think",
        }
    }
}

/// Sampling and transport parameters for one endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceParams {
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: u32,
    pub min_p: f64,
    pub mode: Mode,
    pub max_retries: u32,
    pub timeout: Duration,
}

impl InferenceParams {
    /// The recommended sampling preset for each mode.
    pub fn preset(mode: Mode) -> Self {
        let (temperature, top_p) = match mode {
            Mode::Think => (0.6, 0.95),
            Mode::NoThink => (0.7, 0.8),
        };
        InferenceParams {
            temperature,
            top_p,
            top_k: 20,
            min_p: 0.0,
            mode,
            max_retries: 3,
            timeout: Duration::from_secs(120),
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("temperature", self.temperature),
            ("top_p", self.top_p),
            ("min_p", self.min_p),
        ] {
            if !(0.0..=2.0).contains(&v) {
                return Err(Error::Config(format!("{name} {v} outside [0, 2]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: "user".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChatRequest {
    /// Endpoint slot name, for logs and stats only.
    pub endpoint: String,
    pub messages: Vec<Message>,
    pub params: InferenceParams,
}

impl ChatRequest {
    pub fn user(endpoint: impl Into<String>, content: impl Into<String>, params: InferenceParams) -> Self {
        ChatRequest {
            endpoint: endpoint.into(),
            messages: vec![Message::user(content)],
            params,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChatResponse {
    pub content: String,
    pub latency: Duration,
    pub attempts: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Network,
    HttpStatus(u16),
    Timeout,
    MalformedBody,
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorKind::Network => write!(f, "network"),
            ErrorKind::HttpStatus(code) => write!(f, "http status {code}"),
            ErrorKind::Timeout => write!(f, "timeout"),
            ErrorKind::MalformedBody => write!(f, "malformed body"),
        }
    }
}

/// Failure after all retries; `kind` is the classification of the first
/// failed attempt.
#[derive(Debug, Clone, thiserror::Error)]
#[error("chat completion failed ({kind}) after {attempts} attempt(s)")]
pub struct ClientError {
    pub kind: ErrorKind,
    pub attempts: u32,
}

/// One failed attempt, before retry classification is applied.
#[derive(Debug, Clone)]
pub struct AttemptError {
    pub kind: ErrorKind,
    pub transient: bool,
}

/// Append the mode token to the final user message.
fn apply_mode_token(messages: &[Message], mode: Mode) -> Vec<Message> {
    let mut prepared = messages.to_vec();
    let target = prepared
        .iter()
        .rposition(|m| m.role == "user")
        .unwrap_or(prepared.len().saturating_sub(1));
    if let Some(msg) = prepared.get_mut(target) {
        msg.content = format!("{} {}", msg.content, mode.token());
    }
    prepared
}

pub trait ChatClient: Send + Sync {
    /// One raw attempt against the backend. Mode token already applied.
    fn attempt(
        &self,
        messages: &[Message],
        params: &InferenceParams,
    ) -> std::result::Result<String, AttemptError>;

    /// Base delay for exponential backoff between transient retries.
    fn backoff_base(&self) -> Duration {
        Duration::from_millis(200)
    }

    /// Complete a chat request: apply the mode token, retry transient
    /// failures with exponential backoff up to `max_retries` extra
    /// attempts, and return the response content verbatim.
    fn complete(&self, request: &ChatRequest) -> std::result::Result<ChatResponse, ClientError> {
        assert!(!request.messages.is_empty(), "messages must be non-empty");
        let prepared = apply_mode_token(&request.messages, request.params.mode);
        let start = Instant::now();
        let mut attempts = 0u32;
        let mut first_kind: Option<ErrorKind> = None;
        loop {
            attempts += 1;
            match self.attempt(&prepared, &request.params) {
                Ok(content) => {
                    return Ok(ChatResponse {
                        content,
                        latency: start.elapsed(),
                        attempts,
                    })
                }
                Err(err) => {
                    let kind = *first_kind.get_or_insert(err.kind);
                    if !err.transient || attempts > request.params.max_retries {
                        return Err(ClientError { kind, attempts });
                    }
                    let delay = self.backoff_base() * 2u32.saturating_pow(attempts - 1);
                    if !delay.is_zero() {
                        std::thread::sleep(delay);
                    }
                }
            }
        }
    }
}

impl<T: ChatClient + ?Sized> ChatClient for &T {
    fn attempt(
        &self,
        messages: &[Message],
        params: &InferenceParams,
    ) -> std::result::Result<String, AttemptError> {
        (**self).attempt(messages, params)
    }

    fn backoff_base(&self) -> Duration {
        (**self).backoff_base()
    }
}

impl ChatClient for Box<dyn ChatClient> {
    fn attempt(
        &self,
        messages: &[Message],
        params: &InferenceParams,
    ) -> std::result::Result<String, AttemptError> {
        (**self).attempt(messages, params)
    }

    fn backoff_base(&self) -> Duration {
        (**self).backoff_base()
    }
}

/// Strip a trailing mode token (plus the joining space) from a prompt.
/// Used by mocks and tests that inspect outgoing prompts.
pub fn strip_mode_token(content: &str) -> &str {
    for token in ["/think", "/no_think"] {
        if let Some(rest) = content.strip_suffix(token) {
            return rest.trim_end();
        }
    }
    content
}
