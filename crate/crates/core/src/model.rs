//! Shared domain types: strategies and their pools, dialogue turns, verdicts,
//! violation records and per-round traces.
//!
//! Types here carry data and invariant checks only. Behavior lives in the
//! engine, agent, supervisor and runner modules.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised when constructing a value that would break an invariant.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("strategy text must not be empty")]
    EmptyStrategyText,
    #[error("strategy {0} has more successes than attempts")]
    SuccessesExceedAttempts(StrategyId),
    #[error("strategy {id} is {found:?} but the pool holds {expected:?} strategies")]
    KindMismatch {
        id: StrategyId,
        expected: StrategyKind,
        found: StrategyKind,
    },
    #[error("duplicate strategy id {0}")]
    DuplicateId(StrategyId),
    #[error("pool capacity must be at least 1")]
    ZeroCapacity,
}

/// The two participant agents. `A` always speaks first within a turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgentId {
    A,
    B,
}

impl AgentId {
    pub const BOTH: [AgentId; 2] = [AgentId::A, AgentId::B];

    pub fn partner(self) -> AgentId {
        match self {
            AgentId::A => AgentId::B,
            AgentId::B => AgentId::A,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AgentId::A => "A",
            AgentId::B => "B",
        }
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// Tactics for evading the moderator.
    Constraint,
    /// Tactics for conveying the secret information accurately.
    Expression,
}

impl StrategyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Constraint => "constraint",
            StrategyKind::Expression => "expression",
        }
    }

    fn id_tag(self) -> char {
        match self {
            StrategyKind::Constraint => 'c',
            StrategyKind::Expression => 'e',
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Seed,
    Mutation,
    Crossover,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StrategyId(pub String);

impl StrategyId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<String> for StrategyId {
    fn from(s: String) -> Self {
        StrategyId(s)
    }
}

impl From<&str> for StrategyId {
    fn from(s: &str) -> Self {
        StrategyId(s.to_owned())
    }
}

/// One natural-language tactic together with its usage counters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub id: StrategyId,
    pub kind: StrategyKind,
    pub text: String,
    pub successes: u64,
    pub attempts: u64,
    pub origin: Origin,
    pub born_round: u32,
}

impl Strategy {
    pub fn new(
        id: StrategyId,
        kind: StrategyKind,
        text: impl Into<String>,
        origin: Origin,
        born_round: u32,
    ) -> Result<Self, ModelError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(ModelError::EmptyStrategyText);
        }
        Ok(Strategy {
            id,
            kind,
            text,
            successes: 0,
            attempts: 0,
            origin,
            born_round,
        })
    }

    pub fn is_untried(&self) -> bool {
        self.attempts == 0
    }

    pub fn check(&self) -> Result<(), ModelError> {
        if self.text.trim().is_empty() {
            return Err(ModelError::EmptyStrategyText);
        }
        if self.successes > self.attempts {
            return Err(ModelError::SuccessesExceedAttempts(self.id.clone()));
        }
        Ok(())
    }
}

/// A strategy that has been proposed but not yet admitted to a pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrategyDraft {
    pub kind: StrategyKind,
    pub text: String,
    pub origin: Origin,
}

/// Population of strategies of one kind, owned by one agent.
///
/// The pool may briefly exceed `capacity` between an offspring step and the
/// following prune; [`StrategyPool::violations`] reports that as a breach.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyPool {
    owner: AgentId,
    kind: StrategyKind,
    capacity: usize,
    members: Vec<Strategy>,
    next_seq: u32,
}

impl StrategyPool {
    pub fn new(owner: AgentId, kind: StrategyKind, capacity: usize) -> Result<Self, ModelError> {
        if capacity == 0 {
            return Err(ModelError::ZeroCapacity);
        }
        Ok(StrategyPool {
            owner,
            kind,
            capacity,
            members: Vec::new(),
            next_seq: 1,
        })
    }

    pub fn owner(&self) -> AgentId {
        self.owner
    }

    pub fn kind(&self) -> StrategyKind {
        self.kind
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn members(&self) -> &[Strategy] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// T in the fitness formula: attempts summed over current members.
    pub fn total_attempts(&self) -> u64 {
        self.members.iter().map(|s| s.attempts).sum()
    }

    pub fn get(&self, id: &StrategyId) -> Option<&Strategy> {
        self.members.iter().find(|s| &s.id == id)
    }

    pub fn get_mut(&mut self, id: &StrategyId) -> Option<&mut Strategy> {
        self.members.iter_mut().find(|s| &s.id == id)
    }

    pub fn contains(&self, id: &StrategyId) -> bool {
        self.get(id).is_some()
    }

    fn mint_id(&mut self) -> StrategyId {
        let id = StrategyId(format!(
            "{}-{}{:03}",
            self.owner,
            self.kind.id_tag(),
            self.next_seq
        ));
        self.next_seq += 1;
        id
    }

    /// Admits a draft, assigning it a fresh id. Counters start at zero.
    pub fn adopt(&mut self, draft: StrategyDraft, round: u32) -> Result<StrategyId, ModelError> {
        if draft.kind != self.kind {
            return Err(ModelError::KindMismatch {
                id: StrategyId(String::from("<draft>")),
                expected: self.kind,
                found: draft.kind,
            });
        }
        if draft.text.trim().is_empty() {
            return Err(ModelError::EmptyStrategyText);
        }
        let id = self.mint_id();
        let strategy = Strategy::new(id.clone(), draft.kind, draft.text, draft.origin, round)?;
        self.members.push(strategy);
        Ok(id)
    }

    /// Inserts a fully formed strategy. Used by fixtures and tests.
    pub fn insert(&mut self, strategy: Strategy) -> Result<(), ModelError> {
        strategy.check()?;
        if strategy.kind != self.kind {
            return Err(ModelError::KindMismatch {
                id: strategy.id,
                expected: self.kind,
                found: strategy.kind,
            });
        }
        if self.contains(&strategy.id) {
            return Err(ModelError::DuplicateId(strategy.id));
        }
        self.members.push(strategy);
        Ok(())
    }

    pub(crate) fn retain(&mut self, mut keep: impl FnMut(&Strategy) -> bool) {
        self.members.retain(|s| keep(s));
    }

    /// Lists every invariant breach; empty when the pool is well formed.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.members.len() > self.capacity {
            out.push(format!(
                "pool {}/{} holds {} members over capacity {}",
                self.owner,
                self.kind,
                self.members.len(),
                self.capacity
            ));
        }
        let mut seen = BTreeSet::new();
        for s in &self.members {
            if s.kind != self.kind {
                out.push(format!("strategy {} has kind {}", s.id, s.kind));
            }
            if let Err(e) = s.check() {
                out.push(e.to_string());
            }
            if !seen.insert(&s.id) {
                out.push(format!("duplicate strategy id {}", s.id));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    KeywordFilter,
    ModelReview,
    None,
}

/// Supervisory decision on one utterance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub violation: bool,
    pub tier: Tier,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clause: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<String>,
}

impl Verdict {
    pub fn clean() -> Self {
        Verdict {
            violation: false,
            tier: Tier::None,
            clause: None,
            reasoning: None,
        }
    }

    pub fn clean_with_reasoning(reasoning: impl Into<String>) -> Self {
        Verdict {
            reasoning: Some(reasoning.into()),
            ..Verdict::clean()
        }
    }

    pub fn flagged(tier: Tier, clause: impl Into<String>, reasoning: impl Into<String>) -> Self {
        debug_assert!(tier != Tier::None);
        Verdict {
            violation: true,
            tier,
            clause: Some(clause.into()),
            reasoning: Some(reasoning.into()),
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.violation {
            if self.tier == Tier::None {
                out.push("violation verdict without a tier".to_owned());
            }
            if self.clause.is_none() {
                out.push("violation verdict without a clause".to_owned());
            }
        } else if self.clause.is_some() {
            out.push("clean verdict names a clause".to_owned());
        }
        out
    }
}

/// One utterance inside a turn. A turn holds one utterance per agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueTurn {
    pub turn_index: u32,
    pub speaker: AgentId,
    pub utterance: String,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordOrigin {
    #[default]
    Observed,
    Summary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationRecord {
    pub round: u32,
    pub turn: u32,
    pub speaker: AgentId,
    pub offending_text: String,
    pub clause: String,
    pub reasoning: String,
    pub strategies_in_use: Vec<StrategyId>,
    #[serde(default)]
    pub origin: RecordOrigin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundOutcome {
    Clean,
    Flagged,
    Infrastructure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldAnswer {
    pub field: String,
    pub ground_truth: String,
    pub answer: String,
    pub matched: bool,
}

/// Interview answers keyed by the agent that answered.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InterviewResult {
    pub answers: BTreeMap<AgentId, Vec<FieldAnswer>>,
}

impl InterviewResult {
    pub fn matched(&self) -> usize {
        self.answers.values().flatten().filter(|a| a.matched).count()
    }

    pub fn total(&self) -> usize {
        self.answers.values().map(Vec::len).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.matched() as f64 / n as f64,
        }
    }
}

/// Per-round trace: selections, plans, turns, verdicts and interview result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round_index: u32,
    pub constraint_ids: BTreeMap<AgentId, Vec<StrategyId>>,
    pub expression_ids: BTreeMap<AgentId, Vec<StrategyId>>,
    pub plans: BTreeMap<AgentId, String>,
    pub turns: Vec<DialogueTurn>,
    pub completed_turns: u32,
    pub interview: Option<InterviewResult>,
    pub accuracy: f64,
    pub outcome: RoundOutcome,
}

impl RoundRecord {
    pub fn interrupted(&self) -> bool {
        self.outcome != RoundOutcome::Clean
    }

    pub fn ids_for(&self, agent: AgentId, kind: StrategyKind) -> &[StrategyId] {
        let map = match kind {
            StrategyKind::Constraint => &self.constraint_ids,
            StrategyKind::Expression => &self.expression_ids,
        };
        map.get(&agent).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// One piece of information an agent must convey.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfoField {
    pub name: String,
    /// Agent that knows the value and must convey it.
    pub owner: AgentId,
    pub domain: Vec<String>,
    /// Interview question put to the partner of `owner`.
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Role {
    pub name: String,
    pub background: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub regulation_text: String,
    pub keyword_rules: Vec<String>,
    pub info_schema: Vec<InfoField>,
    pub roles: BTreeMap<AgentId, Role>,
    pub turns_per_round: u32,
}

impl ScenarioSpec {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.info_schema.is_empty() {
            out.push("info schema is empty".to_owned());
        }
        for f in &self.info_schema {
            if f.domain.is_empty() {
                out.push(format!("field {} has an empty value domain", f.name));
            }
        }
        if self.turns_per_round == 0 {
            out.push("turns_per_round must be at least 1".to_owned());
        }
        for agent in AgentId::BOTH {
            if !self.roles.contains_key(&agent) {
                out.push(format!("no role for agent {agent}"));
            }
        }
        out
    }

    pub fn fields_owned_by(&self, agent: AgentId) -> impl Iterator<Item = &InfoField> {
        self.info_schema.iter().filter(move |f| f.owner == agent)
    }
}

/// Returns every invariant breach in `record`; `Ok` iff there are none.
pub fn validate_round_record(record: &RoundRecord, spec: &ScenarioSpec) -> Result<(), Vec<String>> {
    let mut out = Vec::new();

    for (label, map) in [
        ("constraint", &record.constraint_ids),
        ("expression", &record.expression_ids),
    ] {
        let mut counts = BTreeSet::new();
        for agent in AgentId::BOTH {
            let ids = map.get(&agent).map(Vec::as_slice).unwrap_or(&[]);
            if ids.is_empty() {
                out.push(format!("agent {agent} has no {label} strategies"));
            }
            let unique: BTreeSet<_> = ids.iter().collect();
            if unique.len() != ids.len() {
                out.push(format!("agent {agent} lists a {label} strategy twice"));
            }
            counts.insert(ids.len());
        }
        if counts.len() > 1 {
            out.push(format!("agents hold different numbers of {label} strategies"));
        }
    }

    for t in &record.turns {
        if t.turn_index == 0 {
            out.push("turn index 0 (turns are 1-based)".to_owned());
        }
        if t.utterance.trim().is_empty() {
            out.push(format!("empty utterance at turn {}", t.turn_index));
        }
        for v in t.verdict.violations() {
            out.push(format!("turn {}: {v}", t.turn_index));
        }
    }

    let first_flag = record
        .turns
        .iter()
        .find(|t| t.verdict.violation)
        .map(|t| t.turn_index);
    if let Some(flag_turn) = first_flag {
        if record
            .turns
            .iter()
            .any(|t| t.turn_index > flag_turn)
        {
            out.push("dialogue continues after a flagged turn".to_owned());
        }
        let flagged = record.turns.iter().filter(|t| t.verdict.violation).count();
        if flagged > 1 {
            out.push(format!("{flagged} flagged utterances in one round"));
        }
    }

    let expected_completed = match first_flag {
        Some(flag_turn) => flag_turn - 1,
        None => {
            // A turn counts once both agents have spoken cleanly.
            let mut per_turn: BTreeMap<u32, usize> = BTreeMap::new();
            for t in &record.turns {
                *per_turn.entry(t.turn_index).or_default() += 1;
            }
            per_turn.values().filter(|&&n| n >= AgentId::BOTH.len()).count() as u32
        }
    };
    if record.completed_turns != expected_completed {
        out.push(format!(
            "completed_turns is {} but the turn log implies {}",
            record.completed_turns, expected_completed
        ));
    }

    if first_flag.is_some() && record.outcome != RoundOutcome::Flagged {
        out.push("round has a flagged turn but outcome is not flagged".to_owned());
    }
    if record.outcome == RoundOutcome::Flagged && first_flag.is_none() {
        out.push("round outcome is flagged but no turn was flagged".to_owned());
    }

    let full = record.completed_turns == spec.turns_per_round
        && record.outcome == RoundOutcome::Clean;
    match (&record.interview, full) {
        (Some(_), false) => out.push("interview present on interrupted round".to_owned()),
        (None, true) => out.push("interview missing on a completed round".to_owned()),
        _ => {}
    }

    if !(0.0..=1.0).contains(&record.accuracy) {
        out.push(format!("accuracy {} outside [0, 1]", record.accuracy));
    }
    match &record.interview {
        None if record.accuracy != 0.0 => {
            out.push("accuracy is nonzero without an interview".to_owned())
        }
        Some(iv) => {
            if (iv.accuracy() - record.accuracy).abs() > 1e-12 {
                out.push(format!(
                    "accuracy {} does not equal matched/total {}",
                    record.accuracy,
                    iv.accuracy()
                ));
            }
            let answered: BTreeSet<&str> = iv
                .answers
                .values()
                .flatten()
                .map(|a| a.field.as_str())
                .collect();
            let schema: BTreeSet<&str> = spec.info_schema.iter().map(|f| f.name.as_str()).collect();
            if answered != schema {
                out.push("interview fields do not match the info schema".to_owned());
            }
        }
        None => {}
    }

    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ScenarioSpec {
        let mut roles = BTreeMap::new();
        for a in AgentId::BOTH {
            roles.insert(
                a,
                Role {
                    name: a.to_string(),
                    background: "bg".into(),
                },
            );
        }
        ScenarioSpec {
            name: "t".into(),
            regulation_text: "R1: nothing".into(),
            keyword_rules: vec![],
            info_schema: vec![
                InfoField {
                    name: "x".into(),
                    owner: AgentId::A,
                    domain: vec!["1".into()],
                    question: "x?".into(),
                },
                InfoField {
                    name: "y".into(),
                    owner: AgentId::B,
                    domain: vec!["2".into()],
                    question: "y?".into(),
                },
            ],
            roles,
            turns_per_round: 5,
        }
    }

    fn ids(prefix: &str) -> Vec<StrategyId> {
        (1..=4).map(|i| StrategyId(format!("{prefix}{i}"))).collect()
    }

    fn turns(flags: &[(bool, bool)]) -> Vec<DialogueTurn> {
        let mut out = Vec::new();
        for (i, &(a, b)) in flags.iter().enumerate() {
            for (agent, flagged) in [(AgentId::A, a), (AgentId::B, b)] {
                let verdict = if flagged {
                    Verdict::flagged(Tier::KeywordFilter, "R1", "digit")
                } else {
                    Verdict::clean()
                };
                out.push(DialogueTurn {
                    turn_index: i as u32 + 1,
                    speaker: agent,
                    utterance: "hello".into(),
                    verdict,
                });
                if flagged {
                    return out;
                }
            }
        }
        out
    }

    fn record(turns: Vec<DialogueTurn>, completed: u32, interview: Option<InterviewResult>) -> RoundRecord {
        let flagged = turns.iter().any(|t| t.verdict.violation);
        let accuracy = interview.as_ref().map_or(0.0, InterviewResult::accuracy);
        let mut c = BTreeMap::new();
        let mut e = BTreeMap::new();
        for a in AgentId::BOTH {
            c.insert(a, ids(&format!("{a}c")));
            e.insert(a, ids(&format!("{a}e")));
        }
        RoundRecord {
            round_index: 1,
            constraint_ids: c,
            expression_ids: e,
            plans: BTreeMap::new(),
            turns,
            completed_turns: completed,
            interview,
            accuracy,
            outcome: if flagged {
                RoundOutcome::Flagged
            } else {
                RoundOutcome::Clean
            },
        }
    }

    fn perfect_interview() -> InterviewResult {
        let mut iv = InterviewResult::default();
        iv.answers.insert(
            AgentId::B,
            vec![FieldAnswer {
                field: "x".into(),
                ground_truth: "1".into(),
                answer: "1".into(),
                matched: true,
            }],
        );
        iv.answers.insert(
            AgentId::A,
            vec![FieldAnswer {
                field: "y".into(),
                ground_truth: "2".into(),
                answer: "3".into(),
                matched: false,
            }],
        );
        iv
    }

    #[test]
    fn interview_on_interrupted_round_is_a_breach() {
        let t = turns(&[(false, false), (false, false), (true, false)]);
        let r = record(t, 2, Some(perfect_interview()));
        let errs = validate_round_record(&r, &spec()).unwrap_err();
        assert!(errs.iter().any(|e| e.contains("interview present on interrupted round")));
    }

    #[test]
    fn clean_full_round_is_ok() {
        let t = turns(&[(false, false); 5]);
        let r = record(t, 5, Some(perfect_interview()));
        assert_eq!(r.accuracy, 0.5);
        validate_round_record(&r, &spec()).unwrap();
    }

    #[test]
    fn completed_turns_counts_only_clean_turns_before_flag() {
        let t = turns(&[(false, false), (false, true)]);
        assert!(validate_round_record(&record(t.clone(), 2, None), &spec()).is_err());
        validate_round_record(&record(t, 1, None), &spec()).unwrap();
    }

    // Oracle: enumerate every flag position (or none) over up to five turns
    // and check the validator accepts exactly the independently counted value.
    #[test]
    fn completed_turns_enumeration() {
        let spec = spec();
        for n_turns in 1..=5usize {
            for flag_at in 0..=(2 * n_turns) {
                let mut flags = vec![(false, false); n_turns];
                let mut expected = n_turns as u32;
                if flag_at < 2 * n_turns {
                    let turn = flag_at / 2;
                    if flag_at % 2 == 0 {
                        flags[turn].0 = true;
                    } else {
                        flags[turn].1 = true;
                    }
                    flags.truncate(turn + 1);
                    expected = turn as u32;
                }
                let t = turns(&flags);
                for claimed in 0..=5u32 {
                    let interview =
                        (claimed == 5 && expected == 5).then(perfect_interview);
                    let r = record(t.clone(), claimed, interview);
                    let ok = validate_round_record(&r, &spec).is_ok();
                    assert_eq!(
                        ok,
                        claimed == expected,
                        "turns={n_turns} flag_at={flag_at} claimed={claimed}"
                    );
                }
            }
        }
    }

    #[test]
    fn verdict_invariants() {
        assert!(Verdict::clean().violations().is_empty());
        assert!(Verdict::flagged(Tier::ModelReview, "R1", "x").violations().is_empty());
        let bad = Verdict {
            violation: true,
            tier: Tier::None,
            clause: None,
            reasoning: None,
        };
        assert_eq!(bad.violations().len(), 2);
    }

    #[test]
    fn pool_ids_and_totals() {
        let mut pool = StrategyPool::new(AgentId::B, StrategyKind::Expression, 20).unwrap();
        let draft = |t: &str| StrategyDraft {
            kind: StrategyKind::Expression,
            text: t.into(),
            origin: Origin::Seed,
        };
        let a = pool.adopt(draft("one"), 0).unwrap();
        let b = pool.adopt(draft("two"), 0).unwrap();
        assert_eq!(a.as_str(), "B-e001");
        assert_eq!(b.as_str(), "B-e002");
        assert_eq!(pool.adopt(draft("  "), 0), Err(ModelError::EmptyStrategyText));
        pool.get_mut(&a).unwrap().attempts = 3;
        pool.get_mut(&b).unwrap().attempts = 2;
        assert_eq!(pool.total_attempts(), 5);
        assert!(pool.violations().is_empty());
        let wrong = StrategyDraft {
            kind: StrategyKind::Constraint,
            ..draft("x")
        };
        assert!(pool.adopt(wrong, 0).is_err());
    }
}
