//! Canonical per-trial event stream.
//!
//! One JSON object per line. Every event carries the schema version, a
//! per-trial logical clock, and trial/round/turn indices (0 where not
//! applicable). No wall-clock time appears in the stream, so two runs with the
//! same script and seed produce byte-identical logs.

use std::fmt::Write as _;
use std::io::{self, BufRead};

use serde::{Deserialize, Serialize};

use crate::model::{AgentId, Origin, RoundOutcome, StrategyId, StrategyKind, Verdict};
use crate::provider::ProviderError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub v: u32,
    pub clock: u64,
    pub trial: u32,
    pub round: u32,
    pub turn: u32,
    #[serde(flatten)]
    pub body: EventBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyEntry {
    pub id: StrategyId,
    pub text: String,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterEntry {
    pub id: StrategyId,
    pub successes: u64,
    pub attempts: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolOp {
    Seed,
    Mutation,
    Crossover,
    Prune,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecretValue {
    pub field: String,
    pub owner: AgentId,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventBody {
    TrialStart {
        scenario: String,
        master_seed: u64,
        stream: u64,
    },
    RoundStart {
        secrets: Vec<SecretValue>,
        regulation_hash: String,
    },
    ProviderCall {
        call_index: u64,
        template: String,
        temperature: f64,
        prompt_sha256: String,
        result: Result<String, ProviderError>,
    },
    PoolUpdate {
        agent: AgentId,
        pool: StrategyKind,
        op: PoolOp,
        added: Vec<StrategyEntry>,
        removed: Vec<StrategyId>,
        size: usize,
    },
    Selection {
        agent: AgentId,
        pool: StrategyKind,
        for_round: u32,
        ids: Vec<StrategyId>,
    },
    Plan {
        agent: AgentId,
        call_index: u64,
        text: String,
    },
    Utterance {
        agent: AgentId,
        call_index: u64,
        plan_call_index: u64,
        text: String,
    },
    Verdict {
        agent: AgentId,
        review_calls: Vec<u64>,
        verdict: Verdict,
    },
    Interview {
        agent: AgentId,
        field: String,
        call_index: u64,
        raw_answer: String,
        answer: String,
        ground_truth: String,
        matched: bool,
    },
    FitnessUpdate {
        agent: AgentId,
        pool: StrategyKind,
        counters: Vec<CounterEntry>,
    },
    Compaction {
        agent: AgentId,
        before: usize,
        after: usize,
        summarized: bool,
    },
    RoundEnd {
        outcome: RoundOutcome,
        completed_turns: u32,
        accuracy: f64,
    },
    TrialEnd {
        rounds: u32,
        total_completed_turns: u64,
    },
    Warning {
        code: String,
        message: String,
    },
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::TrialStart { .. } => "trial_start",
            EventBody::RoundStart { .. } => "round_start",
            EventBody::ProviderCall { .. } => "provider_call",
            EventBody::PoolUpdate { .. } => "pool_update",
            EventBody::Selection { .. } => "selection",
            EventBody::Plan { .. } => "plan",
            EventBody::Utterance { .. } => "utterance",
            EventBody::Verdict { .. } => "verdict",
            EventBody::Interview { .. } => "interview",
            EventBody::FitnessUpdate { .. } => "fitness_update",
            EventBody::Compaction { .. } => "compaction",
            EventBody::RoundEnd { .. } => "round_end",
            EventBody::TrialEnd { .. } => "trial_end",
            EventBody::Warning { .. } => "warning",
        }
    }
}

/// Append-only in-memory event stream for one trial.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    events: Vec<Event>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, trial: u32, round: u32, turn: u32, body: EventBody) -> &Event {
        let clock = self.events.len() as u64 + 1;
        self.events.push(Event {
            v: SCHEMA_VERSION,
            clock,
            trial,
            round,
            turn,
            body,
        });
        self.events.last().expect("just pushed")
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    /// The canonical JSONL form: one compact JSON object per line.
    pub fn to_jsonl(&self) -> String {
        to_jsonl(&self.events)
    }
}

pub fn to_jsonl(events: &[Event]) -> String {
    let mut out = String::new();
    for e in events {
        let line = serde_json::to_string(e).expect("events serialize");
        let _ = writeln!(out, "{line}");
    }
    out
}

#[derive(Debug, thiserror::Error)]
pub enum ReadError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Parses a JSONL event stream, reporting the first malformed line.
pub fn read_events(reader: impl BufRead) -> Result<Vec<Event>, ReadError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event: Event = serde_json::from_str(&line).map_err(|e| ReadError::Malformed {
            line: i + 1,
            reason: e.to_string(),
        })?;
        if event.v != SCHEMA_VERSION {
            return Err(ReadError::Malformed {
                line: i + 1,
                reason: format!("unsupported schema version {}", event.v),
            });
        }
        out.push(event);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip_preserves_events() {
        let mut log = EventLog::new();
        log.push(
            1,
            2,
            3,
            EventBody::Verdict {
                agent: AgentId::B,
                review_calls: vec![4],
                verdict: Verdict::clean(),
            },
        );
        log.push(
            1,
            2,
            3,
            EventBody::ProviderCall {
                call_index: 4,
                template: "supervisor-review".into(),
                temperature: 0.0,
                prompt_sha256: "ab".into(),
                result: Err(ProviderError::Unavailable {
                    attempts: 3,
                    last: "status 503".into(),
                }),
            },
        );
        let text = log.to_jsonl();
        assert!(text.lines().next().unwrap().contains("\"kind\":\"verdict\""));
        let back = read_events(text.as_bytes()).unwrap();
        assert_eq!(back, log.events());
        assert_eq!(back[1].clock, 2);
    }

    #[test]
    fn malformed_line_is_reported_with_number() {
        let text = "{\"v\":1}\n";
        match read_events(text.as_bytes()) {
            Err(ReadError::Malformed { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
    }
}
