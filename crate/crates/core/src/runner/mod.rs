//! Experiment orchestration: rounds, trials, run directories and replay.

mod config;
mod manifest;
mod replay;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::agent::{self, AgentError, AgentMemory};
use crate::context::{trial_rng, TrialContext};
use crate::events::{EventBody, EventLog};
use crate::model::{
    validate_round_record, AgentId, DialogueTurn, RecordOrigin, RoundOutcome, RoundRecord,
    StrategyKind, ViolationRecord,
};
use crate::provider::{Backend, HttpConfig, PromptSet, ProviderSpec, ScriptFile};
use crate::scenario::{Scenario, Secrets};
use crate::supervisor::{moderate_turn, Excerpt, RegulationSource};

pub use config::{ExperimentConfig, RunOptions};
pub use manifest::{Manifest, TrialEntry, MANIFEST_FILE};
pub use replay::{replay, Divergence, ReplayError, ReplayReport};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{} trial(s) aborted: {}", .0.len(), .0.iter().map(|(t, m)| format!("trial {t}: {m}")).collect::<Vec<_>>().join("; "))]
    Aborted(Vec<(u32, String)>),
}

/// Loaded scenario, prompts, regulation and provider backend for a run.
#[derive(Debug, Clone)]
pub struct Resources {
    pub scenario: Arc<Scenario>,
    pub prompts: Arc<PromptSet>,
    pub regulation: RegulationSource,
    pub backend: Backend,
    pub script_hash: Option<String>,
}

impl Resources {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self, RunError> {
        let config = |e: String| RunError::Config(e);
        let mut scenario = match &cfg.assets {
            Some(dir) => Scenario::load_dir(dir),
            None => Scenario::builtin(&cfg.scenario),
        }
        .map_err(|e| config(e.to_string()))?;
        if cfg.assets.is_some() && scenario.name() != cfg.scenario {
            return Err(config(format!(
                "asset bundle defines scenario {:?}, config asks for {:?}",
                scenario.name(),
                cfg.scenario
            )));
        }
        scenario.spec.turns_per_round = cfg.turns_per_round;
        let prompts = match &cfg.prompts {
            Some(dir) => PromptSet::load_dir(dir),
            None => Ok(PromptSet::builtin()),
        }
        .map_err(|e| config(e.to_string()))?;
        let regulation = match &cfg.regulation {
            Some(path) => RegulationSource::file(path).map_err(|e| config(e.to_string()))?,
            None => RegulationSource::fixed(scenario.regulation.clone()),
        };
        let spec: ProviderSpec = cfg.provider.parse().map_err(|e| config(format!("{e}")))?;
        let (backend, script_hash) = match spec {
            ProviderSpec::Scripted { path } => {
                let script = ScriptFile::load(&path).map_err(|e| config(e.to_string()))?;
                let hash = script.hash().to_owned();
                (Backend::Scripted(Arc::new(script)), Some(hash))
            }
            ProviderSpec::Http { base_url, model } => {
                let model = cfg.model.clone().unwrap_or(model);
                (Backend::Http(HttpConfig::new(base_url, model)), None)
            }
        };
        Ok(Resources {
            scenario: Arc::new(scenario),
            prompts: Arc::new(prompts),
            regulation,
            backend,
            script_hash,
        })
    }
}

/// Result of one trial. `error` is set when the trial was aborted.
#[derive(Debug)]
pub struct TrialOutput {
    pub trial: u32,
    pub log: EventLog,
    pub records: Vec<RoundRecord>,
    pub error: Option<String>,
}

fn slot(agent: AgentId) -> usize {
    match agent {
        AgentId::A => 0,
        AgentId::B => 1,
    }
}

struct TrialRun<'a> {
    cfg: &'a ExperimentConfig,
    scenario: &'a Scenario,
    regulation: RegulationSource,
    ctx: TrialContext,
    agents: [AgentMemory; 2],
}

/// Agent failure during dialogue: infrastructure ends the round, anything
/// else aborts the trial.
enum Step {
    Infrastructure(String),
    Abort(String),
}

impl From<AgentError> for Step {
    fn from(e: AgentError) -> Self {
        match e {
            AgentError::Infrastructure(m) => Step::Infrastructure(m),
            other => Step::Abort(other.to_string()),
        }
    }
}

impl TrialRun<'_> {
    fn name(&self, agent: AgentId) -> &str {
        &self.scenario.role(agent).name
    }

    fn dialogue(&mut self, record: &mut RoundRecord) -> Result<RoundOutcome, Step> {
        let turns = self.cfg.turns_per_round;
        for a in AgentId::BOTH {
            let plan = agent::plan_round(&mut self.agents[slot(a)], turns, &mut self.ctx)?;
            record.plans.insert(a, plan.text);
        }
        let regulation = self.regulation.current().clone();
        let window = self.cfg.review_window - 1;
        for t in 1..=turns {
            self.ctx.turn = t;
            for a in AgentId::BOTH {
                let u = agent::generate_utterance(
                    &self.agents[slot(a)],
                    t,
                    turns,
                    &self.cfg.agent,
                    &mut self.ctx,
                )?;
                let earlier = &record.turns[record.turns.len().saturating_sub(window)..];
                let excerpt = Excerpt {
                    context: earlier
                        .iter()
                        .map(|d| (self.scenario.role(d.speaker).name.as_str(), d.utterance.as_str()))
                        .collect(),
                    speaker: &self.scenario.role(a).name,
                    text: &u.text,
                };
                let review = moderate_turn(&excerpt, &regulation, &mut self.ctx)
                    .map_err(|e| Step::Abort(e.to_string()))?;
                self.ctx.emit(EventBody::Verdict {
                    agent: a,
                    review_calls: review.review_calls,
                    verdict: review.verdict.clone(),
                });
                let flagged = review.verdict.violation;
                if flagged {
                    let feedback = ViolationRecord {
                        round: record.round_index,
                        turn: t,
                        speaker: a,
                        offending_text: u.text.clone(),
                        clause: review.verdict.clause.clone().unwrap_or_default(),
                        reasoning: review.verdict.reasoning.clone().unwrap_or_default(),
                        strategies_in_use: self.agents[slot(a)].strategies_in_use(),
                        origin: RecordOrigin::Observed,
                    };
                    for m in &mut self.agents {
                        m.violations.push(feedback.clone());
                    }
                } else {
                    let speaker = self.name(a).to_owned();
                    for m in &mut self.agents {
                        m.hear(&speaker, &u.text);
                    }
                }
                record.turns.push(DialogueTurn {
                    turn_index: t,
                    speaker: a,
                    utterance: u.text,
                    verdict: review.verdict,
                });
                if flagged {
                    return Ok(RoundOutcome::Flagged);
                }
            }
            record.completed_turns = t;
        }
        Ok(RoundOutcome::Clean)
    }

    fn interview(&mut self, secrets: &Secrets, record: &mut RoundRecord) -> Result<(), String> {
        let mut raw = BTreeMap::new();
        let mut calls = BTreeMap::new();
        for a in AgentId::BOTH {
            let questions: Vec<_> = self.scenario.questions_for(a).collect();
            let answers = agent::answer_interview(&self.agents[slot(a)], &questions, &mut self.ctx)
                .map_err(|e| e.to_string())?;
            for ans in answers {
                calls.insert(ans.field.clone(), ans.call_index.unwrap_or(0));
                raw.insert(ans.field, ans.text);
            }
        }
        let result = self
            .scenario
            .score_interview(secrets, &raw)
            .map_err(|e| e.to_string())?;
        for (who, answers) in &result.answers {
            for fa in answers {
                self.ctx.emit(EventBody::Interview {
                    agent: *who,
                    field: fa.field.clone(),
                    call_index: calls[&fa.field],
                    raw_answer: raw[&fa.field].clone(),
                    answer: fa.answer.clone(),
                    ground_truth: fa.ground_truth.clone(),
                    matched: fa.matched,
                });
            }
        }
        record.accuracy = result.accuracy();
        record.interview = Some(result);
        Ok(())
    }

    fn run_round(&mut self, round: u32) -> Result<RoundRecord, String> {
        self.ctx.round = round;
        self.ctx.turn = 0;
        match self.regulation.refresh() {
            Ok(true) => self.ctx.warn("regulation_reloaded", "regulation file changed"),
            Ok(false) => {}
            Err(e) => self.ctx.warn("regulation_reload_failed", e.to_string()),
        }
        let secrets = self.scenario.sample_secrets(&mut self.ctx.rng);
        self.ctx.emit(EventBody::RoundStart {
            secrets: secrets.entries(&self.scenario.spec),
            regulation_hash: self.regulation.current().hash().to_owned(),
        });
        for a in AgentId::BOTH {
            let bg = self
                .scenario
                .background(a, &secrets)
                .map_err(|e| e.to_string())?;
            self.agents[slot(a)].begin_round(bg);
        }

        let mut record = RoundRecord {
            round_index: round,
            constraint_ids: BTreeMap::new(),
            expression_ids: BTreeMap::new(),
            plans: BTreeMap::new(),
            turns: Vec::new(),
            completed_turns: 0,
            interview: None,
            accuracy: 0.0,
            outcome: RoundOutcome::Clean,
        };
        for a in AgentId::BOTH {
            let ids = agent::reflect_constraint(
                &mut self.agents[slot(a)],
                &self.cfg.ga,
                &self.cfg.agent,
                &mut self.ctx,
            )
            .map_err(|e| e.to_string())?;
            record.constraint_ids.insert(a, ids);
        }
        for a in AgentId::BOTH {
            let ids = agent::expression_for_round(&mut self.agents[slot(a)], &self.cfg.ga, &mut self.ctx)
                .map_err(|e| e.to_string())?;
            record.expression_ids.insert(a, ids);
        }

        record.outcome = match self.dialogue(&mut record) {
            Ok(outcome) => outcome,
            Err(Step::Infrastructure(m)) => {
                self.ctx.warn("infrastructure", m);
                RoundOutcome::Infrastructure
            }
            Err(Step::Abort(m)) => return Err(m),
        };
        if record.outcome == RoundOutcome::Clean {
            self.interview(&secrets, &mut record)?;
        }
        validate_round_record(&record, &self.scenario.spec)
            .map_err(|v| format!("round {round} record is inconsistent: {}", v.join("; ")))?;

        if record.outcome != RoundOutcome::Infrastructure {
            for a in AgentId::BOTH {
                for kind in [StrategyKind::Constraint, StrategyKind::Expression] {
                    let counters = crate::ga::update_fitness(
                        self.agents[slot(a)].pool_mut(kind),
                        &record,
                        a,
                        &self.cfg.ga,
                    )
                    .map_err(|e| e.to_string())?;
                    self.ctx.emit(EventBody::FitnessUpdate {
                        agent: a,
                        pool: kind,
                        counters,
                    });
                }
            }
        }
        if let Some(interview) = &record.interview {
            for a in AgentId::BOTH {
                let shortfalls = agent::shortfalls_for(a, interview);
                agent::reflect_expression(
                    &mut self.agents[slot(a)],
                    &shortfalls,
                    &self.cfg.ga,
                    &self.cfg.agent,
                    &mut self.ctx,
                )
                .map_err(|e| e.to_string())?;
            }
        }
        for m in &mut self.agents {
            agent::compact_violation_log(m, &self.cfg.agent, &mut self.ctx)
                .map_err(|e| e.to_string())?;
        }
        self.ctx.emit(EventBody::RoundEnd {
            outcome: record.outcome,
            completed_turns: record.completed_turns,
            accuracy: record.accuracy,
        });
        Ok(record)
    }
}

/// Runs one trial to completion or until a fatal error.
pub fn run_trial(cfg: &ExperimentConfig, res: &Resources, trial: u32) -> TrialOutput {
    let mut ctx = TrialContext::new(
        trial,
        trial_rng(cfg.master_seed, trial),
        res.backend.open(trial),
        res.prompts.clone(),
    );
    ctx.emit(EventBody::TrialStart {
        scenario: res.scenario.name().to_owned(),
        master_seed: cfg.master_seed,
        stream: u64::from(trial),
    });
    let scenario = &*res.scenario;
    let mut make = |a: AgentId| {
        AgentMemory::new(
            a,
            scenario.role(a).name.clone(),
            scenario.role(a.partner()).name.clone(),
            &scenario.seeds.constraint,
            &scenario.seeds.expression,
            &cfg.ga,
            &mut ctx,
        )
    };
    let agents = match (make(AgentId::A), make(AgentId::B)) {
        (Ok(a), Ok(b)) => [a, b],
        (Err(e), _) | (_, Err(e)) => {
            let error = e.to_string();
            ctx.warn("trial_aborted", error.clone());
            return TrialOutput {
                trial,
                log: ctx.into_log(),
                records: Vec::new(),
                error: Some(error),
            };
        }
    };
    let mut run = TrialRun {
        cfg,
        scenario,
        regulation: res.regulation.clone(),
        ctx,
        agents,
    };
    let mut records = Vec::new();
    let mut error = None;
    for round in 1..=cfg.rounds {
        match run.run_round(round) {
            Ok(r) => records.push(r),
            Err(e) => {
                run.ctx.warn("trial_aborted", e.clone());
                error = Some(e);
                break;
            }
        }
    }
    if error.is_none() {
        run.ctx.round = cfg.rounds;
        run.ctx.emit(EventBody::TrialEnd {
            rounds: records.len() as u32,
            total_completed_turns: records.iter().map(|r| u64::from(r.completed_turns)).sum(),
        });
    }
    TrialOutput {
        trial,
        log: run.ctx.into_log(),
        records,
        error,
    }
}

pub fn trial_file_name(trial: u32) -> String {
    format!("trial-{trial:03}.jsonl")
}

fn is_run_output(name: &str) -> bool {
    name == MANIFEST_FILE
        || (name.starts_with("trial-") && name.ends_with(".jsonl"))
        || matches!(name, "metrics.csv" | "rounds.csv" | "summary.csv")
}

fn prepare_out(opts: &RunOptions) -> Result<(), RunError> {
    let io = |e: std::io::Error| RunError::Io(format!("{}: {e}", opts.out.display()));
    if opts.out.exists() {
        let entries: Vec<_> = fs::read_dir(&opts.out)
            .map_err(io)?
            .collect::<Result<_, _>>()
            .map_err(io)?;
        if !entries.is_empty() && !opts.force {
            return Err(RunError::Config(format!(
                "output directory {} is not empty; pass --force to overwrite",
                opts.out.display()
            )));
        }
        for e in entries {
            let name = e.file_name();
            if is_run_output(&name.to_string_lossy()) {
                fs::remove_file(e.path()).map_err(io)?;
            }
        }
    }
    fs::create_dir_all(&opts.out).map_err(io)
}

#[derive(Debug)]
pub struct RunReport {
    pub out: PathBuf,
    pub manifest: Manifest,
    pub records: BTreeMap<u32, Vec<RoundRecord>>,
}

/// Runs every trial in parallel and writes the run directory.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunReport, RunError> {
    let mut cfg = cfg.clone();
    let cwd = std::env::current_dir().map_err(|e| RunError::Io(e.to_string()))?;
    cfg.absolutize(&cwd);
    cfg.validate().map_err(RunError::Config)?;
    let res = Resources::load(&cfg)?;
    prepare_out(opts)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| RunError::Io(e.to_string()))?;
    let outputs: Vec<TrialOutput> = pool.install(|| {
        (1..=cfg.trials)
            .into_par_iter()
            .map(|t| run_trial(&cfg, &res, t))
            .collect()
    });

    let mut entries = Vec::new();
    let mut failures = Vec::new();
    let mut records = BTreeMap::new();
    for out in outputs {
        let file = trial_file_name(out.trial);
        write_file(&opts.out.join(&file), &out.log.to_jsonl())?;
        entries.push(TrialEntry {
            trial: out.trial,
            file,
            events: out.log.len(),
            error: out.error.clone(),
        });
        if let Some(e) = out.error {
            failures.push((out.trial, e));
        }
        records.insert(out.trial, out.records);
    }
    let manifest = Manifest::new(&cfg, &res, entries);
    manifest.write(&opts.out)?;
    if !failures.is_empty() {
        return Err(RunError::Aborted(failures));
    }
    Ok(RunReport {
        out: opts.out.clone(),
        manifest,
        records,
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), RunError> {
    fs::write(path, text).map_err(|e| RunError::Io(format!("writing {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::{Matcher, ProviderError, ProviderRequest, ScriptEntry};

    fn script(entries: &[(Matcher, &str)]) -> Backend {
        Backend::Scripted(Arc::new(ScriptFile::new(
            entries
                .iter()
                .map(|(m, r)| ScriptEntry {
                    matcher: m.clone(),
                    response: (*r).to_owned(),
                })
                .collect(),
        )))
    }

    fn resources(scenario: &str, backend: Backend) -> Resources {
        let scenario = Scenario::builtin(scenario).unwrap();
        Resources {
            regulation: RegulationSource::fixed(scenario.regulation.clone()),
            scenario: Arc::new(scenario),
            prompts: Arc::new(PromptSet::builtin()),
            backend,
            script_hash: None,
        }
    }

    fn cfg(rounds: u32) -> ExperimentConfig {
        ExperimentConfig {
            trials: 1,
            rounds,
            master_seed: 11,
            provider: "scripted:unused".into(),
            ..ExperimentConfig::default()
        }
    }

    fn happy_pet_trade() -> Backend {
        script(&[
            (Matcher::substring("Task: supervisor-review"), "VERDICT: no"),
            (Matcher::substring("Task: plan"), "Plan: talk about autumn leaves."),
            (Matcher::substring("Task: dialogue"), "The leaves are lovely this season."),
            (Matcher::substring("Task: interview"), "unknown"),
            (Matcher::Any, "ok"),
        ])
    }

    #[test]
    fn clean_round_reaches_interview() {
        let res = resources("pet_trade", happy_pet_trade());
        let out = run_trial(&cfg(2), &res, 1);
        assert!(out.error.is_none(), "{:?}", out.error);
        assert_eq!(out.records.len(), 2);
        let r = &out.records[0];
        assert_eq!(r.outcome, RoundOutcome::Clean);
        assert_eq!(r.completed_turns, 5);
        assert_eq!(r.turns.len(), 10);
        assert_eq!(r.interview.as_ref().unwrap().total(), 4);
        assert_eq!(r.accuracy, 0.0);
        let kinds: Vec<_> = out.log.events().iter().map(|e| e.body.kind()).collect();
        assert_eq!(kinds.first(), Some(&"trial_start"));
        assert_eq!(kinds.last(), Some(&"trial_end"));
        assert_eq!(kinds.iter().filter(|k| **k == "round_end").count(), 2);
        assert_eq!(kinds.iter().filter(|k| **k == "interview").count(), 8);
    }

    #[test]
    fn keyword_flag_ends_round_and_feeds_both_logs() {
        let res = resources(
            "pet_trade",
            script(&[
                (Matcher::substring("Task: supervisor-review"), "VERDICT: no"),
                (Matcher::substring("Task: plan"), "Plan"),
                (Matcher::all_of(["Task: dialogue", "Turn: 3/5"]), "so, about the parrot"),
                (Matcher::substring("Task: dialogue"), "Lovely weather."),
                (Matcher::Any, "ok"),
            ]),
        );
        let out = run_trial(&cfg(1), &res, 1);
        let r = &out.records[0];
        assert_eq!(r.outcome, RoundOutcome::Flagged);
        assert_eq!(r.completed_turns, 2);
        assert!(r.interview.is_none());
        assert_eq!(r.turns.last().unwrap().speaker, AgentId::A);
        assert!(!out.log.events().iter().any(|e| e.body.kind() == "interview"));
    }

    #[test]
    fn outage_is_an_infrastructure_round() {
        let provider_backend = Backend::Custom(Arc::new(|_| {
            Box::new(|req: &ProviderRequest| {
                if req.template == "dialogue" {
                    Err(ProviderError::Unavailable { attempts: 3, last: "503".into() })
                } else {
                    Ok("VERDICT: no".to_owned())
                }
            })
        }));
        let res = resources("password", provider_backend);
        let out = run_trial(&cfg(2), &res, 1);
        assert!(out.error.is_none());
        assert!(out.records.iter().all(|r| r.outcome == RoundOutcome::Infrastructure));
        assert!(!out.log.events().iter().any(|e| e.body.kind() == "fitness_update"));
    }

    #[test]
    fn exhausted_script_aborts_the_trial() {
        let res = resources("password", script(&[]));
        let out = run_trial(&cfg(1), &res, 1);
        assert!(out.error.unwrap().contains("no entry"));
    }

    #[test]
    fn trials_are_deterministic() {
        let res = resources("pet_trade", happy_pet_trade());
        let a = run_trial(&cfg(3), &res, 2).log.to_jsonl();
        let b = run_trial(&cfg(3), &res, 2).log.to_jsonl();
        assert_eq!(a, b);
        let c = run_trial(&cfg(3), &res, 3).log.to_jsonl();
        assert_ne!(a, c);
    }
}
