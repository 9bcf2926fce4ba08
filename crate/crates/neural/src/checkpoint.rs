//! JSON checkpoint container: format tag, version, config, vocabulary and
//! named parameter arrays. `f64` values are written in shortest
//! round-trip form, so a reload reproduces scores bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{EncoderDecoder, EncoderScorer, NeuralError, ParamStore, Result, ScorerConfig, Seq2SeqConfig, Vocabulary};

pub const FORMAT: &str = "kbqa-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSpec {
    Scorer { config: ScorerConfig },
    Seq2seq { config: Seq2SeqConfig },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model: ModelSpec,
    pub vocab: Vocabulary,
    pub params: ParamStore,
    /// Free-form metadata recorded by the trainer (seed, loss curve, ...).
    #[serde(default)]
    pub meta: serde_json::Value,
}

impl Checkpoint {
    pub fn from_scorer(m: &EncoderScorer, meta: serde_json::Value) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            model: ModelSpec::Scorer { config: m.config },
            vocab: m.vocab.clone(),
            params: m.params.clone(),
            meta,
        }
    }

    pub fn from_seq2seq(m: &EncoderDecoder, meta: serde_json::Value) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            model: ModelSpec::Seq2seq { config: m.config },
            vocab: m.vocab.clone(),
            params: m.params.clone(),
            meta,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
        fs::write(path, text).map_err(|e| NeuralError::Io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| NeuralError::Io(path.display().to_string(), e))?;
        let ck: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| NeuralError::Checkpoint(format!("{}: {e}", path.display())))?;
        if ck.format != FORMAT || ck.version != VERSION {
            return Err(NeuralError::Checkpoint(format!(
                "{}: unsupported container {} v{}",
                path.display(),
                ck.format,
                ck.version
            )));
        }
        Ok(ck)
    }

    pub fn into_scorer(self) -> Result<EncoderScorer> {
        match self.model {
            ModelSpec::Scorer { config } => EncoderScorer::with_params(config, self.vocab, &self.params),
            ModelSpec::Seq2seq { .. } => Err(NeuralError::Checkpoint("expected a scorer checkpoint".into())),
        }
    }

    pub fn into_seq2seq(self) -> Result<EncoderDecoder> {
        match self.model {
            ModelSpec::Seq2seq { config } => EncoderDecoder::with_params(config, self.vocab, &self.params),
            ModelSpec::Scorer { .. } => Err(NeuralError::Checkpoint("expected a seq2seq checkpoint".into())),
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }
}
