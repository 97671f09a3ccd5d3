//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use lexevo_core::model::{AgentId, Origin, Strategy, StrategyKind, StrategyPool};
use lexevo_core::provider::{Backend, Matcher, ScriptEntry, ScriptFile};

/// A full constraint pool with varied counters.
pub fn pool(size: usize) -> StrategyPool {
    let mut p = StrategyPool::new(AgentId::A, StrategyKind::Constraint, size).expect("capacity > 0");
    for i in 0..size {
        let attempts = (i as u64 * 7) % 13;
        p.insert(Strategy {
            id: format!("A-c{i:03}").into(),
            kind: StrategyKind::Constraint,
            text: format!("tactic {i}"),
            successes: attempts / 2,
            attempts,
            origin: Origin::Seed,
            born_round: 0,
        })
        .expect("unique ids");
    }
    p
}

/// Scripted backend that keeps every pet-trade round clean.
pub fn clean_backend() -> Backend {
    let entries = [
        ("Task: supervisor-review", "VERDICT: no"),
        ("Task: plan", "Plan: talk about the weather and autumn leaves."),
        ("Task: dialogue", "The leaves along the river are turning a lovely shade today."),
        ("Task: interview", "park"),
        ("Task: mutation", "- speak through seasons\n- speak through colours"),
    ]
    .into_iter()
    .map(|(p, r)| ScriptEntry {
        matcher: Matcher::substring(p),
        response: r.to_owned(),
    })
    .chain(std::iter::once(ScriptEntry {
        matcher: Matcher::Any,
        response: "ok".to_owned(),
    }))
    .collect();
    Backend::Scripted(Arc::new(ScriptFile::new(entries)))
}
