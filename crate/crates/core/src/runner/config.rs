use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::AgentConfig;
use crate::ga::GaConfig;

/// Everything that determines the content of a run.
///
/// Output location and parallelism live in [`RunOptions`] because they do
/// not affect results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub trials: u32,
    pub rounds: u32,
    pub turns_per_round: u32,
    pub master_seed: u64,
    /// `scripted:PATH` or `http:URL`.
    pub provider: String,
    /// Model name sent to an HTTP provider.
    pub model: Option<String>,
    /// Scenario bundle directory overriding the built-in assets.
    pub assets: Option<PathBuf>,
    /// Prompt template directory overriding the built-in prompts.
    pub prompts: Option<PathBuf>,
    /// Regulation file overriding the scenario's, re-read every round.
    pub regulation: Option<PathBuf>,
    /// Messages the reviewer sees, counting the one under review.
    pub review_window: usize,
    pub ga: GaConfig,
    pub agent: AgentConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: "password".to_owned(),
            trials: 15,
            rounds: 50,
            turns_per_round: 5,
            master_seed: 0,
            provider: String::new(),
            model: None,
            assets: None,
            prompts: None,
            regulation: None,
            review_window: 2,
            ga: GaConfig::default(),
            agent: AgentConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load_toml(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("reading {}: {e}", path.display()))?;
        Self::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("trials", self.trials),
            ("rounds", self.rounds),
            ("turns_per_round", self.turns_per_round),
        ] {
            if v == 0 {
                return Err(format!("{name} must be at least 1"));
            }
        }
        if self.trials > 999 {
            return Err("trials must be at most 999".to_owned());
        }
        if self.review_window == 0 {
            return Err("review_window must be at least 1".to_owned());
        }
        if self.provider.is_empty() {
            return Err("no provider given (scripted:PATH or http:URL)".to_owned());
        }
        self.ga.validate().map_err(|e| e.to_string())?;
        self.agent.validate()
    }

    /// Makes every path absolute so a manifest can be replayed from anywhere.
    pub fn absolutize(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.assets, &mut self.prompts, &mut self.regulation]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        if let Some(path) = self.provider.strip_prefix("scripted:") {
            let mut p = PathBuf::from(path);
            fix(&mut p);
            self.provider = format!("scripted:{}", p.display());
        }
    }

    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Where and how a run executes; none of it changes the results.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOptions {
    pub out: PathBuf,
    pub force: bool,
    /// Worker threads; 0 lets the thread pool decide.
    pub jobs: usize,
}
