//! Two agents try to pass hidden information through a moderated chat while
//! a supervisor screens every message. Each agent evolves pools of
//! natural-language strategies with a UCB-guided genetic algorithm.
//!
//! Runs are deterministic given a master seed and a provider: scripted
//! providers reproduce byte-identical event logs, and recorded HTTP runs can
//! be replayed from their logs.

pub mod agent;
pub mod context;
pub mod events;
pub mod ga;
pub mod metrics;
pub mod model;
pub mod provider;
pub mod runner;
pub mod scenario;
pub mod supervisor;
pub mod text;

pub use context::{trial_rng, CallError, TrialContext};
pub use events::{Event, EventBody, EventLog};
pub use ga::GaConfig;
pub use model::{
    AgentId, InterviewResult, Origin, RoundOutcome, RoundRecord, Strategy, StrategyId,
    StrategyKind, StrategyPool, Verdict, ViolationRecord,
};
pub use provider::{Backend, PromptSet, Provider, ProviderError, ProviderRequest};
pub use runner::{replay, run_experiment, ExperimentConfig, RunOptions};
pub use scenario::Scenario;
pub use supervisor::RegulationSet;
