//! Live provider speaking the OpenAI-compatible chat-completions protocol.

use std::thread;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{Provider, ProviderError, ProviderRequest};

/// Environment variable holding the bearer token for live runs.
pub const API_KEY_ENV: &str = "LEXEVO_API_KEY";

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    /// Total attempts per call, including the first.
    pub attempts: u32,
    pub initial_backoff: Duration,
    pub timeout: Duration,
}

impl HttpConfig {
    pub const DEFAULT_MODEL: &'static str = "gpt-4o-mini";

    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        HttpConfig {
            base_url: base_url.into().trim_end_matches('/').to_owned(),
            model: model.into(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            attempts: 3,
            initial_backoff: Duration::from_millis(500),
            timeout: Duration::from_secs(120),
        }
    }

    pub fn endpoint(&self) -> String {
        format!("{}/v1/chat/completions", self.base_url)
    }
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Debug, Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

enum Attempt {
    Done(String),
    Retry(String),
    Fail(ProviderError),
}

pub struct HttpProvider {
    cfg: HttpConfig,
    agent: ureq::Agent,
}

impl HttpProvider {
    pub fn new(cfg: HttpConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .http_status_as_error(false)
            .build()
            .new_agent();
        HttpProvider { cfg, agent }
    }

    fn attempt(&self, body: &serde_json::Value) -> Attempt {
        let mut req = self.agent.post(self.cfg.endpoint());
        if let Some(key) = &self.cfg.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(format!("transport: {e}")),
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(format!("reading body: {e}")),
        };
        if status >= 500 {
            return Attempt::Retry(format!("status {status}"));
        }
        if status >= 400 {
            return Attempt::Fail(ProviderError::Rejected { status, body: text });
        }
        match serde_json::from_str::<ChatResponse>(&text) {
            Ok(parsed) => match parsed.choices.into_iter().next() {
                Some(choice) => Attempt::Done(choice.message.content.unwrap_or_default()),
                None => Attempt::Fail(ProviderError::Malformed {
                    detail: "response has no choices".to_owned(),
                }),
            },
            Err(e) => Attempt::Fail(ProviderError::Malformed {
                detail: e.to_string(),
            }),
        }
    }
}

impl Provider for HttpProvider {
    fn complete(&mut self, req: &ProviderRequest) -> Result<String, ProviderError> {
        let body = json!({
            "model": self.cfg.model,
            "messages": req.messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        let mut backoff = self.cfg.initial_backoff;
        let mut last = String::new();
        for attempt in 1..=self.cfg.attempts.max(1) {
            match self.attempt(&body) {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(reason) => last = reason,
            }
            if attempt < self.cfg.attempts {
                thread::sleep(backoff);
                backoff *= 2;
            }
        }
        Err(ProviderError::Unavailable {
            attempts: self.cfg.attempts.max(1),
            last,
        })
    }
}
