//! Per-trial execution context: seeded RNG, provider session and event log.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::events::{EventBody, EventLog};
use crate::provider::{Bindings, PromptError, PromptSet, Provider, ProviderError, ProviderRequest};

/// Seeds the RNG for one trial.
///
/// ChaCha is counter based: the master seed fixes the key and the trial index
/// selects an independent stream, so a trial's randomness does not depend on
/// which other trials ran or in what order.
pub fn trial_rng(master_seed: u64, trial: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(u64::from(trial));
    rng
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CallParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl CallParams {
    pub const CREATIVE: CallParams = CallParams {
        temperature: 0.7,
        max_tokens: 512,
    };
    pub const REVIEW: CallParams = CallParams {
        temperature: 0.0,
        max_tokens: 512,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub call_index: u64,
    pub text: String,
}

/// Failure of a single model call.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum CallError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("call {call_index}: {source}")]
    Provider {
        call_index: u64,
        source: ProviderError,
    },
}

impl CallError {
    /// Broken templates and exhausted scripts abort the whole run.
    pub fn is_fatal(&self) -> bool {
        match self {
            CallError::Prompt(_) => true,
            CallError::Provider { source, .. } => source.is_fatal(),
        }
    }

    pub fn call_index(&self) -> Option<u64> {
        match self {
            CallError::Prompt(_) => None,
            CallError::Provider { call_index, .. } => Some(*call_index),
        }
    }
}

pub struct TrialContext {
    pub trial: u32,
    pub round: u32,
    pub turn: u32,
    pub rng: ChaCha8Rng,
    session_id: String,
    next_call: u64,
    provider: Box<dyn Provider>,
    prompts: Arc<PromptSet>,
    log: EventLog,
}

impl TrialContext {
    pub fn new(
        trial: u32,
        rng: ChaCha8Rng,
        provider: Box<dyn Provider>,
        prompts: Arc<PromptSet>,
    ) -> Self {
        TrialContext {
            trial,
            round: 0,
            turn: 0,
            rng,
            session_id: format!("trial-{trial:03}"),
            next_call: 1,
            provider,
            prompts,
            log: EventLog::new(),
        }
    }

    /// Context for unit tests: trial 1, fixed seed, built-in prompts.
    pub fn for_tests(provider: Box<dyn Provider>, seed: u64) -> Self {
        Self::new(1, trial_rng(seed, 1), provider, Arc::new(PromptSet::builtin()))
    }

    pub fn emit(&mut self, body: EventBody) {
        self.log.push(self.trial, self.round, self.turn, body);
    }

    pub fn warn(&mut self, code: &str, message: impl Into<String>) {
        self.emit(EventBody::Warning {
            code: code.to_owned(),
            message: message.into(),
        });
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn into_log(self) -> EventLog {
        self.log
    }

    /// Calls issued so far in this trial.
    pub fn calls_made(&self) -> u64 {
        self.next_call - 1
    }

    /// Renders `template`, sends it to the provider and records the call.
    pub fn complete(
        &mut self,
        template: &str,
        bindings: &Bindings,
        params: CallParams,
    ) -> Result<Completion, CallError> {
        let messages = self.prompts.render(template, bindings)?;
        let call_index = self.next_call;
        self.next_call += 1;
        let req = ProviderRequest {
            session_id: self.session_id.clone(),
            call_index,
            template: template.to_owned(),
            messages,
            temperature: params.temperature,
            max_tokens: params.max_tokens,
        };
        let result = self.provider.complete(&req);
        let prompt_sha256 = hex::encode(Sha256::digest(req.prompt_text().as_bytes()));
        self.emit(EventBody::ProviderCall {
            call_index,
            template: template.to_owned(),
            temperature: params.temperature,
            prompt_sha256,
            result: result.clone(),
        });
        match result {
            Ok(text) => Ok(Completion { call_index, text }),
            Err(source) => Err(CallError::Provider { call_index, source }),
        }
    }
}
