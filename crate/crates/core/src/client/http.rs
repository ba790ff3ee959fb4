//! OpenAI-compatible chat-completions transport.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{AttemptError, ChatClient, ErrorKind, InferenceParams, Message};
use crate::error::{Error, Result};

/// One remote endpoint slot: base URL, model name, optional bearer token.
pub struct HttpEndpoint {
    base_url: String,
    model: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    backoff: Duration,
}

#[derive(Deserialize)]
struct CompletionBody {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: String,
}

impl HttpEndpoint {
    pub fn new(base_url: &str, model: &str, api_key: Option<String>) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(HttpEndpoint {
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key,
            client,
            backoff: Duration::from_millis(200),
        })
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    fn classify(err: &reqwest::Error) -> AttemptError {
        if err.is_timeout() {
            AttemptError {
                kind: ErrorKind::Timeout,
                transient: true,
            }
        } else {
            AttemptError {
                kind: ErrorKind::Network,
                transient: true,
            }
        }
    }
}

impl ChatClient for HttpEndpoint {
    fn attempt(
        &self,
        messages: &[Message],
        params: &InferenceParams,
    ) -> std::result::Result<String, AttemptError> {
        let body = json!({
            "model": self.model,
            "messages": messages,
            "temperature": params.temperature,
            "top_p": params.top_p,
            "top_k": params.top_k,
            "min_p": params.min_p,
        });
        let url = format!("{}/chat/completions", self.base_url);
        let mut req = self
            .client
            .post(&url)
            .timeout(params.timeout)
            .json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Self::classify(&e))?;
        let status = resp.status();
        if !status.is_success() {
            // 429 and 5xx are transient; other 4xx are permanent
            let transient = status.as_u16() == 429 || status.is_server_error();
            return Err(AttemptError {
                kind: ErrorKind::HttpStatus(status.as_u16()),
                transient,
            });
        }
        let parsed: CompletionBody = resp.json().map_err(|_| AttemptError {
            kind: ErrorKind::MalformedBody,
            transient: false,
        })?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or(AttemptError {
                kind: ErrorKind::MalformedBody,
                transient: false,
            })
    }

    fn backoff_base(&self) -> Duration {
        self.backoff
    }
}
