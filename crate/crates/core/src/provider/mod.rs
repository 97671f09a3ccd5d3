//! Text-generation boundary. Every language-model call in the simulator goes
//! through [`Provider::complete`], either against a live chat-completions
//! endpoint or a deterministic script.

mod http;
pub mod prompt;
mod scripted;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpConfig, HttpProvider, API_KEY_ENV};
pub use prompt::{bindings, Bindings, PromptError, PromptHashes, PromptSet};
pub use scripted::{Matcher, RecordedCall, RecordedProvider, ScriptEntry, ScriptError, ScriptFile, ScriptedProvider};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub session_id: String,
    /// Logical clock, 1-based and strictly increasing within a trial.
    pub call_index: u64,
    pub template: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ProviderRequest {
    /// All message contents joined by newlines; what script matchers see.
    pub fn prompt_text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderError {
    #[error("provider unavailable after {attempts} attempts: {last}")]
    Unavailable { attempts: u32, last: String },
    #[error("provider rejected the request with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed provider response: {detail}")]
    Malformed { detail: String },
    #[error("script has no entry matching call {call_index}")]
    ScriptExhausted { call_index: u64 },
}

impl ProviderError {
    /// Fatal errors indicate a broken fixture or configuration and abort the run.
    pub fn is_fatal(&self) -> bool {
        matches!(self, ProviderError::ScriptExhausted { .. })
    }
}

pub trait Provider: Send {
    fn complete(&mut self, req: &ProviderRequest) -> Result<String, ProviderError>;
}

impl<F> Provider for F
where
    F: FnMut(&ProviderRequest) -> Result<String, ProviderError> + Send,
{
    fn complete(&mut self, req: &ProviderRequest) -> Result<String, ProviderError> {
        self(req)
    }
}

/// How a run reaches its language model, as written on the command line:
/// `scripted:PATH` or `http:URL`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProviderSpec {
    Scripted { path: PathBuf },
    Http { base_url: String, model: String },
}

#[derive(Debug, Error)]
#[error("provider must be scripted:PATH or http:URL, got {0:?}")]
pub struct ProviderSpecError(String);

impl FromStr for ProviderSpec {
    type Err = ProviderSpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(path) = s.strip_prefix("scripted:") {
            if !path.is_empty() {
                return Ok(ProviderSpec::Scripted { path: path.into() });
            }
        }
        if let Some(url) = s.strip_prefix("http:") {
            // Accept both `http:https://host` and `http://host`.
            let base_url = if url.starts_with("//") {
                format!("http:{url}")
            } else {
                url.to_owned()
            };
            if !base_url.is_empty() {
                return Ok(ProviderSpec::Http {
                    base_url,
                    model: HttpConfig::DEFAULT_MODEL.to_owned(),
                });
            }
        }
        Err(ProviderSpecError(s.to_owned()))
    }
}

impl fmt::Display for ProviderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProviderSpec::Scripted { path } => write!(f, "scripted:{}", path.display()),
            ProviderSpec::Http { base_url, .. } => write!(f, "http:{base_url}"),
        }
    }
}

/// A connected provider configuration that opens one session per trial.
#[derive(Clone)]
pub enum Backend {
    Scripted(Arc<ScriptFile>),
    Http(HttpConfig),
    Recorded(Arc<std::collections::BTreeMap<(u32, u64), RecordedCall>>),
    Custom(Arc<dyn Fn(u32) -> Box<dyn Provider> + Send + Sync>),
}

impl fmt::Debug for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Backend::Scripted(s) => f.debug_tuple("Scripted").field(&s.entries().len()).finish(),
            Backend::Http(c) => f.debug_tuple("Http").field(&c.base_url).finish(),
            Backend::Recorded(r) => f.debug_tuple("Recorded").field(&r.len()).finish(),
            Backend::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl Backend {
    /// Opens the provider session for `trial`.
    pub fn open(&self, trial: u32) -> Box<dyn Provider> {
        match self {
            Backend::Scripted(script) => Box::new(ScriptedProvider::new(script.clone())),
            Backend::Http(cfg) => Box::new(HttpProvider::new(cfg.clone())),
            Backend::Recorded(calls) => Box::new(RecordedProvider::new(calls.clone(), trial)),
            Backend::Custom(make) => make(trial),
        }
    }
}
