use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, Resources, RunError};
use crate::events::SCHEMA_VERSION;
use crate::provider::PromptHashes;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialEntry {
    pub trial: u32,
    pub file: String,
    pub events: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Everything needed to check and replay a run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub generator: String,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub prompts: PromptHashes,
    pub script_hash: Option<String>,
    pub scenario_hash: String,
    pub regulation_hash: String,
    pub master_seed: u64,
    pub trials: Vec<TrialEntry>,
}

impl Manifest {
    pub fn new(cfg: &ExperimentConfig, res: &Resources, trials: Vec<TrialEntry>) -> Self {
        Manifest {
            schema_version: SCHEMA_VERSION,
            generator: format!("lexevo {}", env!("CARGO_PKG_VERSION")),
            config: cfg.clone(),
            config_hash: cfg.hash(),
            prompts: res.prompts.hashes(),
            script_hash: res.script_hash.clone(),
            scenario_hash: res.scenario.hash().to_owned(),
            regulation_hash: res.regulation.current().hash().to_owned(),
            master_seed: cfg.master_seed,
            trials,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<(), RunError> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, text)
            .map_err(|e| RunError::Io(format!("writing {}: {e}", path.display())))
    }

    pub fn read(dir: &Path) -> Result<Self, String> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}
