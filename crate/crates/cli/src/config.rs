//! Run configuration: one TOML file, overridden by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use kbqa_core::datagen::SchemaSpec;
use kbqa_core::generator::GeneratorConfig;
use kbqa_core::linker::DisambiguatorConfig;
use kbqa_core::pipeline::PipelineConfig;
use kbqa_core::ranker::RankerConfig;
use serde::{Deserialize, Serialize};

/// Environment variable naming the default data directory.
pub const DATA_DIR_ENV: &str = "KBQA_DATA_DIR";
pub const DEFAULT_DATA_DIR: &str = "data";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    /// Corpus directory: KB files plus train/dev/test JSONL.
    pub data_dir: Option<PathBuf>,
    /// Checkpoint directory; defaults to `<data_dir>/models`.
    pub models_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub spec: SchemaSpec,
    pub ranker: RankerConfig,
    pub generator: GeneratorConfig,
    pub disambiguator: DisambiguatorConfig,
    pub pipeline: PipelineConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn data_dir(&self) -> PathBuf {
        if let Some(d) = &self.data_dir {
            return d.clone();
        }
        match std::env::var_os(DATA_DIR_ENV) {
            Some(d) if !d.is_empty() => PathBuf::from(d),
            _ => PathBuf::from(DEFAULT_DATA_DIR),
        }
    }

    pub fn models_dir(&self) -> PathBuf {
        self.models_dir.clone().unwrap_or_else(|| self.data_dir().join("models"))
    }

    pub fn jobs(&self) -> usize {
        self.jobs.unwrap_or(1).max(1)
    }

    /// Commands that draw random numbers refuse to run without a seed.
    pub fn require_seed(&self, command: &str) -> Result<u64> {
        match self.seed {
            Some(s) => Ok(s),
            None => bail!("{command} needs a seed: pass --seed or set `seed` in the config"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg: RunConfig = toml::from_str("seed = 3\n[ranker]\nepochs = 2\n[pipeline]\nablation = \"rank-only\"\n").unwrap();
        assert_eq!(cfg.seed, Some(3));
        assert_eq!(cfg.ranker.epochs, 2);
        assert_eq!(cfg.ranker.negatives, RankerConfig::default().negatives);
        assert_eq!(cfg.pipeline.ablation, kbqa_core::pipeline::Ablation::RankOnly);
        assert_eq!(cfg.spec, SchemaSpec::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("seeed = 3\n").is_err());
    }

    #[test]
    fn default_config_round_trips() {
        let text = toml::to_string(&RunConfig { seed: Some(1), ..Default::default() }).unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap().seed, Some(1));
    }
}
