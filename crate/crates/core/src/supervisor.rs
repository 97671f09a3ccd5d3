//! Two-tier moderation: a keyword screen, then a model review that must name
//! the violated clause and give its reasoning.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, LazyLock};

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::context::{CallError, CallParams, TrialContext};
use crate::model::{Tier, Verdict};
use crate::provider::bindings;
use crate::text::fold;

#[derive(Debug, Error)]
pub enum RegulationError {
    #[error("reading regulation file {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("regulation JSON: {0}")]
    Json(String),
    #[error("regulation must define at least one clause")]
    NoClauses,
    #[error("duplicate clause id {0}")]
    DuplicateClause(String),
    #[error("keyword rule {pattern:?}: {reason}")]
    BadRule { pattern: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clause {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSpec {
    pub pattern: String,
    pub clause: String,
}

/// Serialized form of a regulation file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegulationDoc {
    pub clauses: Vec<Clause>,
    #[serde(default)]
    pub keyword_rules: Vec<RuleSpec>,
    /// Spelled-out numbers matched by the `class:digit` rule.
    #[serde(default)]
    pub number_words: Vec<String>,
    #[serde(default = "yes")]
    pub hot_reloadable: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone)]
struct KeywordRule {
    spec: RuleSpec,
    regex: Regex,
}

/// Compiled regulation: clauses plus keyword rules.
///
/// Rule patterns:
/// - `class:digit`: any ASCII digit, or any word from `number_words`
/// - `word:TEXT`: `TEXT` as a whole word
/// - anything else: literal substring
///
/// Matching is case-insensitive over NFC, case-folded text.
#[derive(Debug, Clone)]
pub struct RegulationSet {
    doc: RegulationDoc,
    rules: Vec<KeywordRule>,
    hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordHit {
    pub pattern: String,
    pub clause: String,
}

fn word_alternation(words: &[String]) -> Option<String> {
    let mut folded: Vec<String> = words
        .iter()
        .map(|w| fold(w.trim()))
        .filter(|w| !w.is_empty())
        .collect();
    if folded.is_empty() {
        return None;
    }
    // longest first so multi-word entries win over their prefixes
    folded.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    folded.dedup();
    let alts: Vec<String> = folded.iter().map(|w| regex::escape(w)).collect();
    Some(format!(r"\b(?:{})\b", alts.join("|")))
}

impl RegulationSet {
    pub fn from_doc(doc: RegulationDoc) -> Result<Self, RegulationError> {
        if doc.clauses.is_empty() {
            return Err(RegulationError::NoClauses);
        }
        for (i, c) in doc.clauses.iter().enumerate() {
            if doc.clauses[..i].iter().any(|o| o.id == c.id) {
                return Err(RegulationError::DuplicateClause(c.id.clone()));
            }
        }
        let mut rules = Vec::new();
        for spec in &doc.keyword_rules {
            let bad = |reason: &str| RegulationError::BadRule {
                pattern: spec.pattern.clone(),
                reason: reason.to_owned(),
            };
            if !doc.clauses.iter().any(|c| c.id == spec.clause) {
                return Err(bad(&format!("unknown clause {}", spec.clause)));
            }
            let source = if let Some(class) = spec.pattern.strip_prefix("class:") {
                match class {
                    "digit" => match word_alternation(&doc.number_words) {
                        Some(words) => format!("[0-9]|{words}"),
                        None => "[0-9]".to_owned(),
                    },
                    _ => return Err(bad("unknown character class")),
                }
            } else if let Some(word) = spec.pattern.strip_prefix("word:") {
                word_alternation(&[word.to_owned()]).ok_or_else(|| bad("empty word"))?
            } else {
                let lit = fold(&spec.pattern);
                if lit.trim().is_empty() {
                    return Err(bad("empty pattern"));
                }
                regex::escape(&lit)
            };
            let regex = Regex::new(&source).map_err(|e| bad(&e.to_string()))?;
            rules.push(KeywordRule {
                spec: spec.clone(),
                regex,
            });
        }
        let canonical = serde_json::to_string(&doc).expect("regulation serializes");
        let hash = hex::encode(Sha256::digest(canonical.as_bytes()));
        Ok(RegulationSet { doc, rules, hash })
    }

    pub fn from_json(text: &str) -> Result<Self, RegulationError> {
        let doc: RegulationDoc =
            serde_json::from_str(text).map_err(|e| RegulationError::Json(e.to_string()))?;
        Self::from_doc(doc)
    }

    pub fn load(path: &Path) -> Result<Self, RegulationError> {
        let text = fs::read_to_string(path).map_err(|e| RegulationError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn doc(&self) -> &RegulationDoc {
        &self.doc
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.doc.clauses
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// Clause list as shown to the reviewing model.
    pub fn regulation_text(&self) -> String {
        self.doc
            .clauses
            .iter()
            .map(|c| format!("{}: {}", c.id, c.text))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// First keyword rule, in document order, that matches `utterance`.
pub fn keyword_screen(utterance: &str, regulation: &RegulationSet) -> Option<KeywordHit> {
    let text = fold(utterance);
    regulation
        .rules
        .iter()
        .find(|r| r.regex.is_match(&text))
        .map(|r| KeywordHit {
            pattern: r.spec.pattern.clone(),
            clause: r.spec.clause.clone(),
        })
}

/// The message under review plus earlier messages shown as context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Excerpt<'a> {
    /// (speaker label, text), oldest first.
    pub context: Vec<(&'a str, &'a str)>,
    pub speaker: &'a str,
    pub text: &'a str,
}

impl Excerpt<'_> {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (who, text) in &self.context {
            out.push_str(&format!("Earlier message (context only) from {who}: {text}\n"));
        }
        out.push_str(&format!(
            "Message under review from {}: {}",
            self.speaker, self.text
        ));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Review {
    pub verdict: Verdict,
    pub review_calls: Vec<u64>,
}

static VERDICT_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)verdict\W*:\W*(yes|no)\b").expect("valid regex"));
static CLAUSE_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)clause\W*:\s*([^;\n]*)").expect("valid regex"));
static REASONING_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)reasoning\W*:\s*([^\n]*)").expect("valid regex"));

/// Parses the trailing `VERDICT/CLAUSE/REASONING` block of a review.
/// The last `VERDICT:` wins, so free-form reasoning may precede it.
pub fn parse_review(text: &str) -> Option<Verdict> {
    let m = VERDICT_RE.captures_iter(text).last()?;
    let violation = m[1].eq_ignore_ascii_case("yes");
    let tail = &text[m.get(0).expect("whole match").start()..];
    let reasoning = REASONING_RE
        .captures(tail)
        .map(|c| c[1].trim().trim_end_matches(';').trim().to_owned())
        .filter(|r| !r.is_empty());
    if !violation {
        return Some(match reasoning {
            Some(r) => Verdict::clean_with_reasoning(r),
            None => Verdict::clean(),
        });
    }
    let clause = CLAUSE_RE
        .captures(tail)
        .map(|c| c[1].trim().trim_matches(|ch: char| ch == '*' || ch == '`').to_owned())
        .filter(|c| !c.is_empty() && !c.eq_ignore_ascii_case("none"))?;
    Some(Verdict::flagged(
        Tier::ModelReview,
        clause,
        reasoning.unwrap_or_default(),
    ))
}

const FORMAT_REMINDER: &str = "\nYour previous answer could not be parsed. End your answer with the three lines exactly as specified.";

/// Model-backed review with one re-ask on unparseable output.
///
/// Provider outages yield a clean verdict and an `review_unavailable`
/// warning; only fatal call errors are returned.
pub fn llm_review(
    excerpt: &Excerpt<'_>,
    regulation: &RegulationSet,
    ctx: &mut TrialContext,
) -> Result<Review, CallError> {
    let mut review_calls = Vec::new();
    for note in ["", FORMAT_REMINDER] {
        let b = bindings([
            ("regulation_text", regulation.regulation_text()),
            ("dialogue_excerpt", excerpt.render()),
            ("format_note", note.to_owned()),
        ]);
        match ctx.complete("supervisor-review", &b, CallParams::REVIEW) {
            Ok(out) => {
                review_calls.push(out.call_index);
                if let Some(verdict) = parse_review(&out.text) {
                    return Ok(Review {
                        verdict,
                        review_calls,
                    });
                }
            }
            Err(e) if e.is_fatal() => return Err(e),
            Err(e) => {
                review_calls.extend(e.call_index());
                ctx.warn("review_unavailable", format!("moderation review failed: {e}"));
                return Ok(Review {
                    verdict: Verdict::clean(),
                    review_calls,
                });
            }
        }
    }
    ctx.warn(
        "parse_warning",
        "moderation review unparseable after one re-ask; treated as no violation",
    );
    Ok(Review {
        verdict: Verdict::clean(),
        review_calls,
    })
}

/// Keyword screen first; a hit short-circuits without any model call.
pub fn moderate_turn(
    excerpt: &Excerpt<'_>,
    regulation: &RegulationSet,
    ctx: &mut TrialContext,
) -> Result<Review, CallError> {
    if let Some(hit) = keyword_screen(excerpt.text, regulation) {
        return Ok(Review {
            verdict: Verdict::flagged(
                Tier::KeywordFilter,
                hit.clause,
                format!("keyword rule {} matched", hit.pattern),
            ),
            review_calls: Vec::new(),
        });
    }
    llm_review(excerpt, regulation, ctx)
}

/// Where the active regulation comes from. A file-backed source is re-read
/// at round boundaries and swapped in when its content changed.
#[derive(Debug, Clone)]
pub struct RegulationSource {
    current: Arc<RegulationSet>,
    path: Option<PathBuf>,
    file_hash: Option<String>,
}

impl RegulationSource {
    pub fn fixed(set: RegulationSet) -> Self {
        RegulationSource {
            current: Arc::new(set),
            path: None,
            file_hash: None,
        }
    }

    pub fn file(path: impl Into<PathBuf>) -> Result<Self, RegulationError> {
        let path = path.into();
        let (set, hash) = Self::read(&path)?;
        Ok(RegulationSource {
            current: Arc::new(set),
            path: Some(path),
            file_hash: Some(hash),
        })
    }

    fn read(path: &Path) -> Result<(RegulationSet, String), RegulationError> {
        let text = fs::read_to_string(path).map_err(|e| RegulationError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let hash = hex::encode(Sha256::digest(text.as_bytes()));
        Ok((RegulationSet::from_json(&text)?, hash))
    }

    pub fn current(&self) -> &Arc<RegulationSet> {
        &self.current
    }

    /// Re-reads the backing file. Returns whether the regulation changed.
    pub fn refresh(&mut self) -> Result<bool, RegulationError> {
        let Some(path) = &self.path else {
            return Ok(false);
        };
        if !self.current.doc.hot_reloadable {
            return Ok(false);
        }
        let text = fs::read_to_string(path).map_err(|e| RegulationError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let hash = hex::encode(Sha256::digest(text.as_bytes()));
        if self.file_hash.as_deref() == Some(hash.as_str()) {
            return Ok(false);
        }
        self.current = Arc::new(RegulationSet::from_json(&text)?);
        self.file_hash = Some(hash);
        Ok(true)
    }
}
