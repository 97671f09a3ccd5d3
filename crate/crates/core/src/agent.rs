//! Participant agent: memory, reflection, planning, dialogue and interview.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::{CallError, CallParams, TrialContext};
use crate::events::{EventBody, PoolOp, StrategyEntry};
use crate::ga::{
    self, cap_chars, describe_violations, strip_list_marker, GaConfig, GaError, MutationSource,
    OffspringError, Shortfall,
};
use crate::model::{
    AgentId, InfoField, InterviewResult, ModelError, Origin, RecordOrigin, StrategyDraft,
    StrategyId, StrategyKind, StrategyPool, ViolationRecord,
};
use crate::provider::bindings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    /// Violation log length above which the log is compacted.
    pub compaction_threshold: usize,
    /// Newest violation records shown to constraint reflection.
    pub recent_violations: usize,
    /// Unconditional mutation attempts used to refill an underfull pool.
    pub pad_attempts: usize,
    pub max_utterance_chars: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            compaction_threshold: 30,
            recent_violations: 5,
            pad_attempts: 3,
            max_utterance_chars: 2000,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.compaction_threshold == 0 {
            return Err("compaction_threshold must be at least 1".to_owned());
        }
        if self.recent_violations == 0 {
            return Err("recent_violations must be at least 1".to_owned());
        }
        if self.max_utterance_chars == 0 {
            return Err("max_utterance_chars must be at least 1".to_owned());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    /// Provider trouble that voids the round without counting as a violation.
    #[error("infrastructure failure: {0}")]
    Infrastructure(String),
    #[error(transparent)]
    Fatal(CallError),
    #[error("agent {agent} {kind} pool holds {have} strategies but selection needs {need}")]
    SeedingRequired {
        agent: AgentId,
        kind: StrategyKind,
        have: usize,
        need: usize,
    },
    #[error(transparent)]
    Ga(#[from] GaError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl AgentError {
    fn from_call(e: CallError) -> Self {
        if e.is_fatal() {
            AgentError::Fatal(e)
        } else {
            AgentError::Infrastructure(e.to_string())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plan {
    pub call_index: u64,
    pub text: String,
}

/// Per-round working state, cleared at every round start.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ShortTerm {
    pub background: String,
    /// (speaker name, message) for messages that passed moderation.
    pub dialogue: Vec<(String, String)>,
    pub constraint_ids: Vec<StrategyId>,
    pub expression_ids: Vec<StrategyId>,
    pub plan: Option<Plan>,
}

#[derive(Debug, Clone)]
pub struct AgentMemory {
    pub agent: AgentId,
    pub name: String,
    pub partner_name: String,
    pub short_term: ShortTerm,
    pub violations: Vec<ViolationRecord>,
    pub constraint_pool: StrategyPool,
    pub expression_pool: StrategyPool,
    /// Expression selection made by reflection at the end of the last round.
    pub next_expression: Option<Vec<StrategyId>>,
    last_constraint: Vec<StrategyId>,
    last_expression: Vec<StrategyId>,
}

fn entries(pool: &StrategyPool, ids: &[StrategyId]) -> Vec<StrategyEntry> {
    ids.iter()
        .filter_map(|id| pool.get(id))
        .map(|s| StrategyEntry {
            id: s.id.clone(),
            text: s.text.clone(),
            origin: s.origin,
        })
        .collect()
}

impl AgentMemory {
    /// Fresh memory with both pools seeded; emits one seed event per pool.
    pub fn new(
        agent: AgentId,
        name: impl Into<String>,
        partner_name: impl Into<String>,
        constraint_seeds: &[String],
        expression_seeds: &[String],
        ga: &GaConfig,
        ctx: &mut TrialContext,
    ) -> Result<Self, AgentError> {
        let mut mem = AgentMemory {
            agent,
            name: name.into(),
            partner_name: partner_name.into(),
            short_term: ShortTerm::default(),
            violations: Vec::new(),
            constraint_pool: StrategyPool::new(agent, StrategyKind::Constraint, ga.capacity)?,
            expression_pool: StrategyPool::new(agent, StrategyKind::Expression, ga.capacity)?,
            next_expression: None,
            last_constraint: Vec::new(),
            last_expression: Vec::new(),
        };
        for (kind, seeds) in [
            (StrategyKind::Constraint, constraint_seeds),
            (StrategyKind::Expression, expression_seeds),
        ] {
            let drafts = seeds.iter().map(|t| StrategyDraft {
                kind,
                text: t.clone(),
                origin: Origin::Seed,
            });
            mem.adopt(kind, drafts.collect(), PoolOp::Seed, ctx)?;
        }
        Ok(mem)
    }

    pub fn pool(&self, kind: StrategyKind) -> &StrategyPool {
        match kind {
            StrategyKind::Constraint => &self.constraint_pool,
            StrategyKind::Expression => &self.expression_pool,
        }
    }

    pub fn pool_mut(&mut self, kind: StrategyKind) -> &mut StrategyPool {
        match kind {
            StrategyKind::Constraint => &mut self.constraint_pool,
            StrategyKind::Expression => &mut self.expression_pool,
        }
    }

    fn adopt(
        &mut self,
        kind: StrategyKind,
        drafts: Vec<StrategyDraft>,
        op: PoolOp,
        ctx: &mut TrialContext,
    ) -> Result<(), AgentError> {
        let round = ctx.round;
        let pool = self.pool_mut(kind);
        let mut ids = Vec::new();
        for d in drafts {
            ids.push(pool.adopt(d, round)?);
        }
        let added = entries(pool, &ids);
        let size = pool.len();
        ctx.emit(EventBody::PoolUpdate {
            agent: self.agent,
            pool: kind,
            op,
            added,
            removed: Vec::new(),
            size,
        });
        Ok(())
    }

    /// Resets short-term memory for a new round.
    pub fn begin_round(&mut self, background: String) {
        self.short_term = ShortTerm {
            background,
            ..ShortTerm::default()
        };
    }

    /// Records a message that passed moderation.
    pub fn hear(&mut self, speaker: &str, text: &str) {
        self.short_term
            .dialogue
            .push((speaker.to_owned(), text.to_owned()));
    }

    pub fn dialogue_log(&self) -> String {
        if self.short_term.dialogue.is_empty() {
            return "(no messages yet)".to_owned();
        }
        self.short_term
            .dialogue
            .iter()
            .map(|(who, text)| format!("{who}: {text}"))
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Ids of the strategies currently in use, constraint first.
    pub fn strategies_in_use(&self) -> Vec<StrategyId> {
        self.short_term
            .constraint_ids
            .iter()
            .chain(&self.short_term.expression_ids)
            .cloned()
            .collect()
    }

    fn recent_violations(&self, n: usize) -> &[ViolationRecord] {
        &self.violations[self.violations.len().saturating_sub(n)..]
    }
}

fn report_skip(ctx: &mut TrialContext, what: &str, e: OffspringError) -> Result<(), AgentError> {
    match e {
        OffspringError::Fatal(e) => Err(AgentError::Fatal(e)),
        OffspringError::Skipped(reason) => {
            ctx.warn("offspring_skipped", format!("{what}: {reason}"));
            Ok(())
        }
    }
}

fn try_mutation(
    mem: &mut AgentMemory,
    kind: StrategyKind,
    source: MutationSource<'_>,
    ga_cfg: &GaConfig,
    ctx: &mut TrialContext,
) -> Result<(), AgentError> {
    match ga::mutate(kind, source, ctx, ga_cfg) {
        Ok(drafts) => mem.adopt(kind, drafts, PoolOp::Mutation, ctx),
        Err(e) => report_skip(ctx, "mutation", e),
    }
}

/// Mutation roll, crossover roll, prune, then select.
fn evolve_and_select(
    mem: &mut AgentMemory,
    kind: StrategyKind,
    source: MutationSource<'_>,
    for_round: u32,
    ga_cfg: &GaConfig,
    cfg: &AgentConfig,
    ctx: &mut TrialContext,
) -> Result<Vec<StrategyId>, AgentError> {
    // both rolls are always drawn so RNG use does not depend on the source
    let mutation_hit = ctx.rng.random::<f64>() < ga_cfg.mutation_prob;
    if mutation_hit && !source.is_empty() {
        try_mutation(mem, kind, source, ga_cfg, ctx)?;
    }

    if ctx.rng.random::<f64>() < ga_cfg.crossover_prob {
        let previous = match kind {
            StrategyKind::Constraint => &mem.last_constraint,
            StrategyKind::Expression => &mem.last_expression,
        };
        let pool = mem.pool(kind);
        let mut candidates: Vec<&_> = pool
            .members()
            .iter()
            .filter(|s| !previous.contains(&s.id))
            .collect();
        if candidates.len() < 2 {
            candidates = pool.members().iter().collect();
        }
        if candidates.len() >= 2 {
            let picks = sample(&mut ctx.rng, candidates.len(), 2);
            let parents = [candidates[picks.index(0)], candidates[picks.index(1)]];
            let parents = [parents[0].clone(), parents[1].clone()];
            match ga::crossover([&parents[0], &parents[1]], ctx, ga_cfg) {
                Ok(draft) => mem.adopt(kind, vec![draft], PoolOp::Crossover, ctx)?,
                Err(e) => report_skip(ctx, "crossover", e)?,
            }
        }
    }

    let removed = ga::prune_pool(mem.pool_mut(kind), ga_cfg)?;
    if !removed.is_empty() {
        ctx.emit(EventBody::PoolUpdate {
            agent: mem.agent,
            pool: kind,
            op: PoolOp::Prune,
            added: Vec::new(),
            removed: removed.into_iter().map(|s| s.id).collect(),
            size: mem.pool(kind).len(),
        });
    }

    let need = ga_cfg.select_count;
    let mut attempts = 0;
    while mem.pool(kind).len() < need && attempts < cfg.pad_attempts {
        attempts += 1;
        try_mutation(mem, kind, source, ga_cfg, ctx)?;
    }
    if mem.pool(kind).len() < need {
        return Err(AgentError::SeedingRequired {
            agent: mem.agent,
            kind,
            have: mem.pool(kind).len(),
            need,
        });
    }
    select(mem, kind, for_round, ga_cfg, ctx)
}

fn select(
    mem: &mut AgentMemory,
    kind: StrategyKind,
    for_round: u32,
    ga_cfg: &GaConfig,
    ctx: &mut TrialContext,
) -> Result<Vec<StrategyId>, AgentError> {
    let ids = ga::select_strategies(mem.pool(kind), ga_cfg, &mut ctx.rng)?;
    ctx.emit(EventBody::Selection {
        agent: mem.agent,
        pool: kind,
        for_round,
        ids: ids.clone(),
    });
    match kind {
        StrategyKind::Constraint => mem.last_constraint = ids.clone(),
        StrategyKind::Expression => mem.last_expression = ids.clone(),
    }
    Ok(ids)
}

/// Evolves the constraint pool from recent violations and selects this
/// round's constraint strategies.
pub fn reflect_constraint(
    mem: &mut AgentMemory,
    ga_cfg: &GaConfig,
    cfg: &AgentConfig,
    ctx: &mut TrialContext,
) -> Result<Vec<StrategyId>, AgentError> {
    let recent = mem.recent_violations(cfg.recent_violations).to_vec();
    let ids = evolve_and_select(
        mem,
        StrategyKind::Constraint,
        MutationSource::Violations(&recent),
        ctx.round,
        ga_cfg,
        cfg,
        ctx,
    )?;
    mem.short_term.constraint_ids = ids.clone();
    Ok(ids)
}

/// Evolves the expression pool from interview shortfalls and selects the
/// expression strategies for the next round.
pub fn reflect_expression(
    mem: &mut AgentMemory,
    shortfalls: &[Shortfall],
    ga_cfg: &GaConfig,
    cfg: &AgentConfig,
    ctx: &mut TrialContext,
) -> Result<Vec<StrategyId>, AgentError> {
    let ids = evolve_and_select(
        mem,
        StrategyKind::Expression,
        MutationSource::Shortcomings(shortfalls),
        ctx.round + 1,
        ga_cfg,
        cfg,
        ctx,
    )?;
    mem.next_expression = Some(ids.clone());
    Ok(ids)
}

/// Expression strategies for the current round: the selection carried over
/// from the last reflection, or a plain selection when there is none.
pub fn expression_for_round(
    mem: &mut AgentMemory,
    ga_cfg: &GaConfig,
    ctx: &mut TrialContext,
) -> Result<Vec<StrategyId>, AgentError> {
    let ids = match mem.next_expression.take() {
        Some(ids) if ids.iter().all(|id| mem.expression_pool.contains(id)) => ids,
        _ => select(mem, StrategyKind::Expression, ctx.round, ga_cfg, ctx)?,
    };
    mem.short_term.expression_ids = ids.clone();
    Ok(ids)
}

/// Fields `agent` owns that the partner failed to recover.
pub fn shortfalls_for(agent: AgentId, interview: &InterviewResult) -> Vec<Shortfall> {
    interview
        .answers
        .get(&agent.partner())
        .into_iter()
        .flatten()
        .filter(|a| !a.matched)
        .map(|a| Shortfall {
            field: a.field.clone(),
            expected: a.ground_truth.clone(),
            received: a.answer.clone(),
        })
        .collect()
}

fn strategy_list(pool: &StrategyPool, ids: &[StrategyId]) -> String {
    ids.iter()
        .filter_map(|id| pool.get(id))
        .map(|s| format!("- {}", s.text))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn plan_round(
    mem: &mut AgentMemory,
    turns: u32,
    ctx: &mut TrialContext,
) -> Result<Plan, AgentError> {
    let b = bindings([
        ("background", mem.short_term.background.clone()),
        (
            "constraint_strategies",
            strategy_list(&mem.constraint_pool, &mem.short_term.constraint_ids),
        ),
        (
            "expression_strategies",
            strategy_list(&mem.expression_pool, &mem.short_term.expression_ids),
        ),
        ("turns", turns.to_string()),
    ]);
    let out = ctx
        .complete("plan", &b, CallParams::CREATIVE)
        .map_err(AgentError::from_call)?;
    let text = out.text.trim();
    if text.is_empty() {
        return Err(AgentError::Infrastructure(format!(
            "call {}: empty plan",
            out.call_index
        )));
    }
    let plan = Plan {
        call_index: out.call_index,
        text: text.to_owned(),
    };
    ctx.emit(EventBody::Plan {
        agent: mem.agent,
        call_index: plan.call_index,
        text: plan.text.clone(),
    });
    mem.short_term.plan = Some(plan.clone());
    Ok(plan)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub call_index: u64,
    pub text: String,
}

/// Next message for `turn` (1-based). The caller moderates it and then
/// records it with [`AgentMemory::hear`].
pub fn generate_utterance(
    mem: &AgentMemory,
    turn: u32,
    turns: u32,
    cfg: &AgentConfig,
    ctx: &mut TrialContext,
) -> Result<Utterance, AgentError> {
    let plan = mem
        .short_term
        .plan
        .clone()
        .ok_or_else(|| AgentError::Infrastructure("no plan for this round".to_owned()))?;
    let b = bindings([
        ("background", mem.short_term.background.clone()),
        ("plan", plan.text.clone()),
        ("dialogue_log", mem.dialogue_log()),
        ("turn", turn.to_string()),
        ("turns", turns.to_string()),
        ("partner", mem.partner_name.clone()),
    ]);
    let out = ctx
        .complete("dialogue", &b, CallParams::CREATIVE)
        .map_err(AgentError::from_call)?;
    let mut text = out.text.trim().to_owned();
    if text.is_empty() {
        return Err(AgentError::Infrastructure(format!(
            "call {}: empty utterance",
            out.call_index
        )));
    }
    if text.chars().count() > cfg.max_utterance_chars {
        text = cap_chars(&text, cfg.max_utterance_chars);
        ctx.warn(
            "utterance_truncated",
            format!(
                "call {}: utterance cut to {} characters",
                out.call_index, cfg.max_utterance_chars
            ),
        );
    }
    ctx.emit(EventBody::Utterance {
        agent: mem.agent,
        call_index: out.call_index,
        plan_call_index: plan.call_index,
        text: text.clone(),
    });
    Ok(Utterance {
        call_index: out.call_index,
        text,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawAnswer {
    pub field: String,
    pub call_index: Option<u64>,
    pub text: String,
}

/// One call per question. A failed call yields an empty answer, which
/// scores as a mismatch.
pub fn answer_interview(
    mem: &AgentMemory,
    questions: &[&InfoField],
    ctx: &mut TrialContext,
) -> Result<Vec<RawAnswer>, AgentError> {
    let mut out = Vec::with_capacity(questions.len());
    for q in questions {
        let b = bindings([
            ("background", mem.short_term.background.clone()),
            ("dialogue_log", mem.dialogue_log()),
            ("question", q.question.clone()),
        ]);
        match ctx.complete("interview", &b, CallParams::CREATIVE) {
            Ok(c) => out.push(RawAnswer {
                field: q.name.clone(),
                call_index: Some(c.call_index),
                text: c.text.trim().to_owned(),
            }),
            Err(e) if e.is_fatal() => return Err(AgentError::Fatal(e)),
            Err(e) => {
                ctx.warn(
                    "interview_unavailable",
                    format!("field {}: {e}; scored as a mismatch", q.name),
                );
                out.push(RawAnswer {
                    field: q.name.clone(),
                    call_index: e.call_index(),
                    text: String::new(),
                });
            }
        }
    }
    Ok(out)
}

fn parse_summary(text: &str, max: usize) -> Vec<(String, String)> {
    text.lines()
        .map(strip_list_marker)
        .filter_map(|line| {
            let (clause, summary) = line.split_once('|')?;
            let clause = clause.trim();
            let summary = summary.trim();
            (!clause.is_empty() && !summary.is_empty())
                .then(|| (clause.to_owned(), summary.to_owned()))
        })
        .take(max)
        .collect()
}

/// Replaces an over-long violation log with a model-written summary of at
/// most half the threshold (rounded up). If the summary fails, the newest
/// `threshold` records are kept instead. Returns whether the log changed.
pub fn compact_violation_log(
    mem: &mut AgentMemory,
    cfg: &AgentConfig,
    ctx: &mut TrialContext,
) -> Result<bool, AgentError> {
    let threshold = cfg.compaction_threshold;
    let before = mem.violations.len();
    if before <= threshold {
        return Ok(false);
    }
    let max_records = threshold.div_ceil(2);
    let b = bindings([
        ("violations", describe_violations(&mem.violations)),
        ("max_records", max_records.to_string()),
    ]);
    let summary = match ctx.complete("compaction", &b, CallParams::CREATIVE) {
        Ok(c) => parse_summary(&c.text, max_records),
        Err(e) if e.is_fatal() => return Err(AgentError::Fatal(e)),
        Err(e) => {
            ctx.warn("compaction_unavailable", e.to_string());
            Vec::new()
        }
    };
    let summarized = !summary.is_empty();
    if summarized {
        let round = ctx.round;
        mem.violations = summary
            .into_iter()
            .map(|(clause, text)| ViolationRecord {
                round,
                turn: 0,
                speaker: mem.agent,
                offending_text: text,
                clause,
                reasoning: "merged summary of earlier violations".to_owned(),
                strategies_in_use: Vec::new(),
                origin: RecordOrigin::Summary,
            })
            .collect();
    } else {
        ctx.warn(
            "compaction_fallback",
            format!("kept the newest {threshold} of {before} violation records"),
        );
        mem.violations.drain(..before - threshold);
    }
    ctx.emit(EventBody::Compaction {
        agent: mem.agent,
        before,
        after: mem.violations.len(),
        summarized,
    });
    Ok(true)
}
