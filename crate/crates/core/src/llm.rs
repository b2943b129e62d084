//! Minimal chat-completion client shared by the external responder, the
//! LLM engagement policy and the external summarizer.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const RESPONDER_URL_ENV: &str = "DITTO_RESPONDER_URL";
pub const DECISION_URL_ENV: &str = "DITTO_DECISION_URL";
pub const SUMMARIZER_URL_ENV: &str = "DITTO_SUMMARIZER_URL";
pub const API_KEY_ENV: &str = "DITTO_API_KEY";
pub const MODEL_ENV: &str = "DITTO_MODEL";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChatError {
    #[error("request timed out")]
    Timeout,
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("endpoint returned status {0}")]
    Status(u16),
    #[error("malformed response: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: "assistant".into(),
            content: content.into(),
        }
    }
}

pub trait ChatClient: Send {
    fn complete(&mut self, messages: &[ChatMessage]) -> Result<String, ChatError>;
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f32,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

/// Blocking client for an OpenAI-style `chat/completions` endpoint.
pub struct HttpChatClient {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpChatClient {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .new_agent();
        Self {
            endpoint: endpoint.into(),
            model: "gpt-4o".into(),
            api_key: None,
            agent,
        }
    }

    /// Builds a client from `url_var`, picking up the shared model and key
    /// variables. Returns `None` when the endpoint variable is unset.
    pub fn from_env(url_var: &str, timeout: Duration) -> Option<Self> {
        let endpoint = std::env::var(url_var).ok().filter(|s| !s.trim().is_empty())?;
        let mut client = Self::new(endpoint, timeout);
        if let Ok(model) = std::env::var(MODEL_ENV) {
            client.model = model;
        }
        client.api_key = std::env::var(API_KEY_ENV).ok();
        Some(client)
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = model.into();
        self
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&mut self, messages: &[ChatMessage]) -> Result<String, ChatError> {
        let body = CompletionRequest {
            model: &self.model,
            messages,
            temperature: 0.0,
        };
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(map_ureq)?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(ChatError::Status(status));
        }
        let parsed: CompletionResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| match map_ureq(e) {
                ChatError::Transport(m) => ChatError::Malformed(m),
                other => other,
            })?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .filter(|c| !c.trim().is_empty())
            .ok_or_else(|| ChatError::Malformed("no message content".into()))
    }
}

fn map_ureq(e: ureq::Error) -> ChatError {
    match e {
        ureq::Error::Timeout(_) => ChatError::Timeout,
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => ChatError::Timeout,
        other => ChatError::Transport(other.to_string()),
    }
}
