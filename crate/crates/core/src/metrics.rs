//! Dialogue metrics: turns survived, accuracy, entropy and lexical diversity.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use thiserror::Error;
use unicode_segmentation::UnicodeSegmentation;

use crate::events::{read_events, Event, EventBody, ReadError};
use crate::model::RoundOutcome;
use crate::runner::{Manifest, MANIFEST_FILE};
use crate::text::fold;

fn is_ideographic(c: char) -> bool {
    matches!(c,
        '\u{3040}'..='\u{30FF}'
        | '\u{3400}'..='\u{4DBF}'
        | '\u{4E00}'..='\u{9FFF}'
        | '\u{F900}'..='\u{FAFF}'
        | '\u{20000}'..='\u{2FA1F}')
}

/// Word tokens of `text`, case-folded.
///
/// Splits on Unicode word boundaries and drops segments without letters or
/// digits. Word segmentation yields one segment per ideograph, so runs of
/// adjacent ideographs are joined back into a single token.
pub fn tokenize(text: &str) -> Vec<String> {
    let folded = fold(text);
    let mut out: Vec<String> = Vec::new();
    let mut prev_ideographic = false;
    for seg in folded.split_word_bounds() {
        if !seg.chars().any(char::is_alphanumeric) {
            prev_ideographic = false;
            continue;
        }
        let ideographic = seg.chars().all(is_ideographic);
        match out.last_mut() {
            Some(last) if ideographic && prev_ideographic => last.push_str(seg),
            _ => out.push(seg.to_owned()),
        }
        prev_ideographic = ideographic;
    }
    out
}

/// Shannon entropy in bits of the token distribution; `None` when empty.
pub fn entropy<T: Ord>(tokens: &[T]) -> Option<f64> {
    if tokens.is_empty() {
        return None;
    }
    let mut counts: BTreeMap<&T, usize> = BTreeMap::new();
    for t in tokens {
        *counts.entry(t).or_default() += 1;
    }
    let n = tokens.len() as f64;
    let h = counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum::<f64>();
    // a single symbol gives -0.0
    Some(h.max(0.0))
}

/// Unique n-grams over total n-grams; `None` with fewer than `n` tokens.
pub fn distinct_n<T: Ord>(tokens: &[T], n: usize) -> Option<f64> {
    if n == 0 || tokens.len() < n {
        return None;
    }
    let grams: Vec<&[T]> = tokens.windows(n).collect();
    let unique: BTreeSet<&[T]> = grams.iter().copied().collect();
    Some(unique.len() as f64 / grams.len() as f64)
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{file}: {source}")]
    Read { file: String, source: ReadError },
    #[error("{0}")]
    Io(String),
    #[error("no completed rounds found in {0}")]
    Empty(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    pub trial: u32,
    pub round: u32,
    pub completed_turns: u32,
    pub accuracy: f64,
    pub outcome: RoundOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialMetrics {
    pub trial: u32,
    pub rounds: Vec<RoundMetrics>,
    pub token_count: usize,
    pub entropy: Option<f64>,
    /// distinct-n keyed by n.
    pub distinct: BTreeMap<usize, Option<f64>>,
}

impl TrialMetrics {
    /// Turns survived over all rounds that count.
    pub fn total_turns(&self) -> u64 {
        self.scored().map(|r| u64::from(r.completed_turns)).sum()
    }

    /// Rounds that count: everything except infrastructure failures.
    pub fn scored(&self) -> impl Iterator<Item = &RoundMetrics> {
        self.rounds
            .iter()
            .filter(|r| r.outcome != RoundOutcome::Infrastructure)
    }
}

/// Metrics for one trial's events. Text metrics pool every participant
/// utterance in the trial.
pub fn trial_metrics(events: &[Event], ns: &[usize]) -> TrialMetrics {
    let trial = events.first().map_or(0, |e| e.trial);
    let mut rounds = Vec::new();
    let mut tokens = Vec::new();
    for e in events {
        match &e.body {
            EventBody::RoundEnd {
                outcome,
                completed_turns,
                accuracy,
            } => rounds.push(RoundMetrics {
                trial: e.trial,
                round: e.round,
                completed_turns: *completed_turns,
                accuracy: *accuracy,
                outcome: *outcome,
            }),
            EventBody::Utterance { text, .. } => tokens.extend(tokenize(text)),
            _ => {}
        }
    }
    TrialMetrics {
        trial,
        rounds,
        token_count: tokens.len(),
        entropy: entropy(&tokens),
        distinct: ns.iter().map(|&n| (n, distinct_n(&tokens, n))).collect(),
    }
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn fmt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundSummary {
    pub round: u32,
    /// Trials whose round counted.
    pub trials: usize,
    pub mean_completed_turns: Option<f64>,
    pub mean_accuracy: Option<f64>,
}

/// Metrics for a whole run.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub label: String,
    /// Extra distinct-n orders beyond 1.
    pub extra_n: Option<usize>,
    pub trials: Vec<TrialMetrics>,
}

impl Analysis {
    pub fn from_trials(label: impl Into<String>, extra_n: Option<usize>, trials: Vec<TrialMetrics>) -> Self {
        Analysis {
            label: label.into(),
            extra_n: extra_n.filter(|&n| n != 1),
            trials,
        }
    }

    pub fn distinct_orders(&self) -> Vec<usize> {
        std::iter::once(1).chain(self.extra_n).collect()
    }

    /// Per round index, means over trials with infrastructure rounds left
    /// out of the denominator.
    pub fn per_round(&self) -> Vec<RoundSummary> {
        let mut by_round: BTreeMap<u32, Vec<&RoundMetrics>> = BTreeMap::new();
        for t in &self.trials {
            for r in &t.rounds {
                let entry = by_round.entry(r.round).or_default();
                if r.outcome != RoundOutcome::Infrastructure {
                    entry.push(r);
                }
            }
        }
        by_round
            .into_iter()
            .map(|(round, rs)| RoundSummary {
                round,
                trials: rs.len(),
                mean_completed_turns: mean(rs.iter().map(|r| f64::from(r.completed_turns))),
                mean_accuracy: mean(rs.iter().map(|r| r.accuracy)),
            })
            .collect()
    }

    pub fn total_turns(&self) -> Option<f64> {
        mean(self.trials.iter().map(|t| t.total_turns() as f64))
    }

    pub fn avg_entropy(&self) -> Option<f64> {
        mean(self.trials.iter().filter_map(|t| t.entropy))
    }

    pub fn avg_distinct(&self, n: usize) -> Option<f64> {
        mean(
            self.trials
                .iter()
                .filter_map(|t| t.distinct.get(&n).copied().flatten()),
        )
    }

    /// `trial,round,completed_turns,accuracy`, one row per counted round.
    pub fn metrics_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["trial", "round", "completed_turns", "accuracy"])
            .expect("in-memory write");
        for t in &self.trials {
            for r in t.scored() {
                w.write_record([
                    r.trial.to_string(),
                    r.round.to_string(),
                    r.completed_turns.to_string(),
                    fmt(Some(r.accuracy)),
                ])
                .expect("in-memory write");
            }
        }
        finish(w)
    }

    /// `round,trials,mean_completed_turns,mean_accuracy`.
    pub fn rounds_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["round", "trials", "mean_completed_turns", "mean_accuracy"])
            .expect("in-memory write");
        for r in self.per_round() {
            w.write_record([
                r.round.to_string(),
                r.trials.to_string(),
                fmt(r.mean_completed_turns),
                fmt(r.mean_accuracy),
            ])
            .expect("in-memory write");
        }
        finish(w)
    }

    /// `label,total_turns,avg_entropy,avg_distinct1[,avg_distinctN]`.
    pub fn summary_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![
            "label".to_owned(),
            "total_turns".to_owned(),
            "avg_entropy".to_owned(),
        ];
        header.extend(self.distinct_orders().iter().map(|n| format!("avg_distinct{n}")));
        w.write_record(&header).expect("in-memory write");
        let mut row = vec![
            self.label.clone(),
            fmt(self.total_turns()),
            fmt(self.avg_entropy()),
        ];
        row.extend(self.distinct_orders().iter().map(|&n| fmt(self.avg_distinct(n))));
        w.write_record(&row).expect("in-memory write");
        finish(w)
    }

    /// Writes `metrics.csv`, `rounds.csv` and `summary.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, MetricsError> {
        let mut written = Vec::new();
        for (name, text) in [
            ("metrics.csv", self.metrics_csv()),
            ("rounds.csv", self.rounds_csv()),
            ("summary.csv", self.summary_csv()),
        ] {
            let path = dir.join(name);
            fs::write(&path, text)
                .map_err(|e| MetricsError::Io(format!("writing {}: {e}", path.display())))?;
            written.push(path);
        }
        Ok(written)
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

/// Default summary label: scenario and model, or the directory name.
pub fn default_label(dir: &Path) -> String {
    match Manifest::read(dir) {
        Ok(m) => {
            let backend = m
                .config
                .provider
                .split(':')
                .next()
                .unwrap_or("unknown")
                .to_owned();
            let model = m.config.model.clone().unwrap_or(backend);
            format!("{}/{}", m.config.scenario, model)
        }
        Err(_) => dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".to_owned()),
    }
}

/// Reads every `trial-*.jsonl` in `dir` and computes run metrics.
pub fn analyze_run(
    dir: &Path,
    extra_n: Option<usize>,
    label: Option<String>,
) -> Result<Analysis, MetricsError> {
    let io = |e: std::io::Error| MetricsError::Io(format!("{}: {e}", dir.display()));
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name().is_some_and(|n| {
                let n = n.to_string_lossy();
                n.starts_with("trial-") && n.ends_with(".jsonl") && n != MANIFEST_FILE
            })
        })
        .collect();
    files.sort();
    let label = label.unwrap_or_else(|| default_label(dir));
    let orders: Vec<usize> = std::iter::once(1).chain(extra_n.filter(|&n| n != 1)).collect();
    let mut trials = Vec::new();
    for f in &files {
        let file = File::open(f).map_err(|e| MetricsError::Io(format!("{}: {e}", f.display())))?;
        let events = read_events(BufReader::new(file)).map_err(|source| MetricsError::Read {
            file: f.display().to_string(),
            source,
        })?;
        let m = trial_metrics(&events, &orders);
        if !m.rounds.is_empty() {
            trials.push(m);
        }
    }
    if trials.is_empty() {
        return Err(MetricsError::Empty(dir.display().to_string()));
    }
    Ok(Analysis::from_trials(label, extra_n, trials))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_examples() {
        assert_eq!(tokenize("The cat, the cat."), ["the", "cat", "the", "cat"]);
        assert_eq!(tokenize("你好 世界"), ["你好", "世界"]);
        assert!(tokenize("").is_empty());
        assert!(tokenize(" ... !! ").is_empty());
        assert_eq!(tokenize("Don't STOP"), ["don't", "stop"]);
        assert_eq!(tokenize("我们在park见面"), ["我们在", "park", "见面"]);
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&["a", "a", "b", "b"]), Some(1.0));
        assert_eq!(entropy(&["a", "a", "a"]), Some(0.0));
        assert_eq!(entropy(&["a", "b", "c", "d"]), Some(2.0));
        assert_eq!(entropy::<&str>(&[]), None);
    }

    #[test]
    fn distinct_examples() {
        assert_eq!(distinct_n(&["the", "cat", "the", "dog"], 1), Some(0.75));
        assert_eq!(distinct_n(&["a", "b", "c"], 1), Some(1.0));
        assert_eq!(distinct_n(&["a", "a", "a", "a"], 2), Some(1.0 / 3.0));
        assert_eq!(distinct_n(&["a"], 2), None);
        assert_eq!(distinct_n::<&str>(&[], 1), None);
    }

    fn round(trial: u32, round: u32, turns: u32, outcome: RoundOutcome) -> RoundMetrics {
        RoundMetrics {
            trial,
            round,
            completed_turns: turns,
            accuracy: 0.5,
            outcome,
        }
    }

    fn trial(t: u32, rounds: Vec<RoundMetrics>) -> TrialMetrics {
        TrialMetrics {
            trial: t,
            rounds,
            token_count: 0,
            entropy: None,
            distinct: BTreeMap::new(),
        }
    }

    #[test]
    fn per_round_means() {
        let a = Analysis::from_trials(
            "x",
            None,
            vec![
                trial(1, vec![round(1, 1, 5, RoundOutcome::Clean)]),
                trial(2, vec![round(2, 1, 3, RoundOutcome::Flagged)]),
            ],
        );
        assert_eq!(a.per_round()[0].mean_completed_turns, Some(4.0));
    }

    #[test]
    fn infrastructure_rounds_leave_the_denominator() {
        let a = Analysis::from_trials(
            "x",
            None,
            vec![
                trial(1, vec![round(1, 1, 4, RoundOutcome::Clean)]),
                trial(2, vec![round(2, 1, 1, RoundOutcome::Infrastructure)]),
                trial(3, vec![round(3, 1, 2, RoundOutcome::Flagged)]),
            ],
        );
        let r = &a.per_round()[0];
        assert_eq!(r.trials, 2);
        assert_eq!(r.mean_completed_turns, Some(3.0));
        assert_eq!(a.metrics_csv().lines().count(), 3);
    }

    #[test]
    fn absent_text_metrics_are_blank() {
        let a = Analysis::from_trials("run, one", Some(2), vec![trial(1, vec![round(1, 1, 2, RoundOutcome::Flagged)])]);
        assert_eq!(
            a.summary_csv(),
            "label,total_turns,avg_entropy,avg_distinct1,avg_distinct2\n\"run, one\",2.000000,,,\n"
        );
    }
}
