//! Deterministic providers: script playback and recorded-call playback.
//!
//! A script file is JSONL, one entry per line:
//!
//! ```text
//! {"match": "any", "response": "ok"}
//! {"match": "index", "index": 2, "response": "B"}
//! {"match": "substring", "pattern": "Task: plan", "response": "..."}
//! {"match": "substring", "pattern": ["Task: dialogue", "Turn: 3/5"], "response": "..."}
//! ```
//!
//! Entries are tried in file order and the first match wins. `index` matches
//! the per-trial call index; `substring` matches when every pattern occurs in
//! the concatenated prompt text. Blank lines and lines starting with `#` are
//! ignored.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{Provider, ProviderError, ProviderRequest};

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("reading script {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("script line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Patterns {
    One(String),
    All(Vec<String>),
}

impl Patterns {
    fn matches(&self, prompt: &str) -> bool {
        match self {
            Patterns::One(p) => prompt.contains(p.as_str()),
            Patterns::All(ps) => ps.iter().all(|p| prompt.contains(p.as_str())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "match", rename_all = "snake_case")]
pub enum Matcher {
    Any,
    Index { index: u64 },
    Substring { pattern: Patterns },
}

impl Matcher {
    pub fn substring(p: impl Into<String>) -> Self {
        Matcher::Substring {
            pattern: Patterns::One(p.into()),
        }
    }

    pub fn all_of<I, S>(ps: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Matcher::Substring {
            pattern: Patterns::All(ps.into_iter().map(Into::into).collect()),
        }
    }

    fn matches(&self, req: &ProviderRequest, prompt: &str) -> bool {
        match self {
            Matcher::Any => true,
            Matcher::Index { index } => *index == req.call_index,
            Matcher::Substring { pattern } => pattern.matches(prompt),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(flatten)]
    pub matcher: Matcher,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptFile {
    entries: Vec<ScriptEntry>,
    hash: String,
}

impl ScriptFile {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        let text = entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("script entries serialize"))
            .collect::<Vec<_>>()
            .join("\n");
        ScriptFile {
            entries,
            hash: hex::encode(Sha256::digest(text.as_bytes())),
        }
    }

    pub fn parse(text: &str) -> Result<Self, ScriptError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let entry: ScriptEntry = serde_json::from_str(trimmed).map_err(|e| ScriptError::Parse {
                line: i + 1,
                reason: e.to_string(),
            })?;
            entries.push(entry);
        }
        Ok(ScriptFile {
            entries,
            hash: hex::encode(Sha256::digest(text.as_bytes())),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ScriptError> {
        let text = fs::read_to_string(path).map_err(|source| ScriptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn entries(&self) -> &[ScriptEntry] {
        &self.entries
    }

    /// SHA-256 of the script source.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn lookup(&self, req: &ProviderRequest) -> Result<&str, ProviderError> {
        let prompt = req.prompt_text();
        self.entries
            .iter()
            .find(|e| e.matcher.matches(req, &prompt))
            .map(|e| e.response.as_str())
            .ok_or(ProviderError::ScriptExhausted {
                call_index: req.call_index,
            })
    }
}

/// Pure lookup against a script; no state beyond the shared script.
#[derive(Debug, Clone)]
pub struct ScriptedProvider {
    script: Arc<ScriptFile>,
}

impl ScriptedProvider {
    pub fn new(script: Arc<ScriptFile>) -> Self {
        ScriptedProvider { script }
    }
}

impl Provider for ScriptedProvider {
    fn complete(&mut self, req: &ProviderRequest) -> Result<String, ProviderError> {
        self.script.lookup(req).map(str::to_owned)
    }
}

/// Outcome of one provider call as stored in an event log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedCall {
    pub template: String,
    pub result: Result<String, ProviderError>,
}

/// Plays back the calls recorded in a trial's event log, keyed by call index.
#[derive(Debug, Clone)]
pub struct RecordedProvider {
    calls: Arc<BTreeMap<(u32, u64), RecordedCall>>,
    trial: u32,
}

impl RecordedProvider {
    pub fn new(calls: Arc<BTreeMap<(u32, u64), RecordedCall>>, trial: u32) -> Self {
        RecordedProvider { calls, trial }
    }
}

impl Provider for RecordedProvider {
    fn complete(&mut self, req: &ProviderRequest) -> Result<String, ProviderError> {
        match self.calls.get(&(self.trial, req.call_index)) {
            Some(call) if call.template == req.template => call.result.clone(),
            _ => Err(ProviderError::ScriptExhausted {
                call_index: req.call_index,
            }),
        }
    }
}
