use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use super::{run_trial, Manifest, Resources, MANIFEST_FILE};
use crate::events::{read_events, to_jsonl, Event, EventBody};
use crate::provider::{Backend, RecordedCall};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("{0}")]
    Manifest(String),
    #[error("cannot rebuild the run: {0}")]
    Setup(String),
    #[error("{what} changed since the run was recorded (recorded {recorded}, now {current}); refusing to replay")]
    HashMismatch {
        what: &'static str,
        recorded: String,
        current: String,
    },
    #[error("{file}: {reason}")]
    Log { file: String, reason: String },
}

/// First differing line of one trial log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Divergence {
    pub trial: u32,
    /// 1-based line number in the trial log.
    pub line: usize,
    pub recorded: Option<String>,
    pub replayed: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ReplayReport {
    pub trials: usize,
    pub events: usize,
    /// Number of lines that differ, summed over trials.
    pub divergences: usize,
    pub first: Option<Divergence>,
}

fn check(what: &'static str, recorded: &str, current: &str) -> Result<(), ReplayError> {
    if recorded == current {
        Ok(())
    } else {
        Err(ReplayError::HashMismatch {
            what,
            recorded: recorded.to_owned(),
            current: current.to_owned(),
        })
    }
}

/// Canonical form of a recorded line; unparseable lines stay verbatim.
fn canonical_line(line: &str) -> String {
    match serde_json::from_str::<Event>(line) {
        Ok(e) => serde_json::to_string(&e).expect("event serializes"),
        Err(_) => line.to_owned(),
    }
}

/// Re-executes a run directory (or a single trial log inside one) and
/// compares the regenerated event stream line by line.
///
/// Scripted runs are re-driven from the script, which must still hash to
/// the recorded value. HTTP runs are re-driven from the provider responses
/// stored in the logs.
pub fn replay(path: &Path) -> Result<ReplayReport, ReplayError> {
    let (dir, only) = if path.is_dir() {
        (path.to_path_buf(), None)
    } else {
        let dir = path
            .parent()
            .filter(|p| p.join(MANIFEST_FILE).exists())
            .ok_or_else(|| {
                ReplayError::Manifest(format!("no {MANIFEST_FILE} next to {}", path.display()))
            })?;
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned());
        (dir.to_path_buf(), name)
    };
    let manifest = Manifest::read(&dir).map_err(ReplayError::Manifest)?;
    let cfg = &manifest.config;
    check("configuration", &manifest.config_hash, &cfg.hash())?;
    let mut res = Resources::load(cfg).map_err(|e| ReplayError::Setup(e.to_string()))?;
    check("prompt templates", &manifest.prompts.combined, &res.prompts.hashes().combined)?;
    check("scenario assets", &manifest.scenario_hash, res.scenario.hash())?;
    check("regulation", &manifest.regulation_hash, res.regulation.current().hash())?;
    if let (Some(rec), Some(cur)) = (&manifest.script_hash, &res.script_hash) {
        check("provider script", rec, cur)?;
    }

    let entries: Vec<_> = manifest
        .trials
        .iter()
        .filter(|t| only.as_deref().is_none_or(|f| f == t.file))
        .collect();
    if entries.is_empty() {
        return Err(ReplayError::Manifest(format!(
            "{} is not listed in the manifest",
            path.display()
        )));
    }

    let mut recorded_lines = BTreeMap::new();
    let mut calls = BTreeMap::new();
    for t in &entries {
        let file = dir.join(&t.file);
        let text = fs::read_to_string(&file).map_err(|e| ReplayError::Log {
            file: file.display().to_string(),
            reason: e.to_string(),
        })?;
        if manifest.script_hash.is_none() {
            let events = read_events(BufReader::new(text.as_bytes())).map_err(|e| ReplayError::Log {
                file: file.display().to_string(),
                reason: e.to_string(),
            })?;
            for e in events {
                if let EventBody::ProviderCall {
                    call_index,
                    template,
                    result,
                    ..
                } = e.body
                {
                    calls.insert((e.trial, call_index), RecordedCall { template, result });
                }
            }
        }
        recorded_lines.insert(t.trial, text);
    }
    if manifest.script_hash.is_none() {
        res.backend = Backend::Recorded(Arc::new(calls));
    }

    let mut report = ReplayReport::default();
    for t in entries {
        let out = run_trial(cfg, &res, t.trial);
        let replayed = to_jsonl(out.log.events());
        let recorded: Vec<String> = recorded_lines[&t.trial].lines().map(canonical_line).collect();
        let replayed: Vec<&str> = replayed.lines().collect();
        report.trials += 1;
        report.events += replayed.len();
        for i in 0..recorded.len().max(replayed.len()) {
            let a = recorded.get(i).map(String::as_str);
            let b = replayed.get(i).copied();
            if a != b {
                report.divergences += 1;
                if report.first.is_none() {
                    report.first = Some(Divergence {
                        trial: t.trial,
                        line: i + 1,
                        recorded: a.map(str::to_owned),
                        replayed: b.map(str::to_owned),
                    });
                }
            }
        }
    }
    Ok(report)
}
