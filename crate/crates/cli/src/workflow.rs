//! Training and checkpoint helpers shared by the commands.

use std::path::Path;

use anyhow::{Context, Result};
use kbqa_core::dataset::Example;
use kbqa_core::enumerate::EnumConfig;
use kbqa_core::generator::{prepare_generator_examples, train_generator, Generator, GeneratorConfig, GeneratorReport};
use kbqa_core::kb::KnowledgeBase;
use kbqa_core::linker::{train_disambiguator, DisambiguationReport, Disambiguator, DisambiguatorConfig};
use kbqa_core::pipeline::{Ablation, Models, PipelineConfig};
use kbqa_core::ranker::{prepare_examples, train_ranker, Ranker, RankerConfig, TrainReport};
use kbqa_core::text::{build_vocabulary, slot_question, tokenize_question};
use kbqa_neural::{Checkpoint, Vocabulary};
use serde_json::json;

pub const RANKER_FILE: &str = "ranker.json";
pub const GENERATOR_FILE: &str = "generator.json";
pub const DISAMBIGUATOR_FILE: &str = "disambiguator.json";

/// KB pieces plus the training questions, both raw and with gold mentions
/// slotted. Every model trained on the same split gets the same vocabulary.
pub fn corpus_vocabulary(kb: &KnowledgeBase, train: &[Example]) -> Vocabulary {
    let mut questions: Vec<Vec<String>> = Vec::with_capacity(2 * train.len());
    for ex in train {
        questions.push(tokenize_question(&ex.question));
        questions.push(slot_question(&ex.question, &ex.gold_links()).0);
    }
    build_vocabulary(kb, questions.iter().map(Vec::as_slice))
}

pub fn fit_ranker(kb: &KnowledgeBase, train: &[Example], config: &RankerConfig, seed: u64) -> Result<(Ranker, TrainReport)> {
    let examples = prepare_examples(train, kb, &config.enumeration)?;
    Ok(train_ranker(&examples, corpus_vocabulary(kb, train), config, seed)?)
}

pub fn fit_disambiguator(
    kb: &KnowledgeBase,
    train: &[Example],
    config: &DisambiguatorConfig,
    seed: u64,
) -> Result<(Disambiguator, DisambiguationReport)> {
    Ok(train_disambiguator(train, kb, corpus_vocabulary(kb, train), config, seed)?)
}

/// Trains on the top candidates of `ranker` over gold-linked pools.
pub fn fit_generator(
    kb: &KnowledgeBase,
    train: &[Example],
    ranker: &Ranker,
    enumeration: &EnumConfig,
    config: &GeneratorConfig,
    seed: u64,
) -> Result<(Generator, GeneratorReport)> {
    let examples = prepare_examples(train, kb, enumeration)?;
    let gen_examples = prepare_generator_examples(&examples, ranker, config.top_k)?;
    Ok(train_generator(&gen_examples, corpus_vocabulary(kb, train), config, seed)?)
}

pub fn save_ranker(path: &Path, m: &Ranker, meta: serde_json::Value) -> Result<()> {
    Ok(Checkpoint::from_scorer(&m.scorer, meta).save(path)?)
}

pub fn save_disambiguator(path: &Path, m: &Disambiguator, meta: serde_json::Value) -> Result<()> {
    Ok(Checkpoint::from_scorer(&m.scorer, meta).save(path)?)
}

pub fn save_generator(path: &Path, m: &Generator, meta: serde_json::Value) -> Result<()> {
    Ok(Checkpoint::from_seq2seq(&m.model, meta).save(path)?)
}

fn load(path: &Path, what: &str) -> Result<Checkpoint> {
    if !path.exists() {
        anyhow::bail!("{what} checkpoint not found: {}", path.display());
    }
    Checkpoint::load(path).with_context(|| format!("loading {what} checkpoint {}", path.display()))
}

pub fn load_ranker(path: &Path) -> Result<Ranker> {
    Ok(Ranker { scorer: load(path, "ranker")?.into_scorer()? })
}

pub fn load_disambiguator(path: &Path) -> Result<Disambiguator> {
    Ok(Disambiguator { scorer: load(path, "disambiguator")?.into_scorer()? })
}

pub fn load_generator(path: &Path) -> Result<Generator> {
    Ok(Generator { model: load(path, "generator")?.into_seq2seq()? })
}

/// Loads what `config` needs from a models directory: the ranker always,
/// the generator unless the run is rank-only, the disambiguator when
/// disambiguation is on.
pub fn load_models(dir: &Path, config: &PipelineConfig) -> Result<Models> {
    let ranker = load_ranker(&dir.join(RANKER_FILE))?;
    let generator = match config.ablation {
        Ablation::RankOnly => None,
        _ => Some(load_generator(&dir.join(GENERATOR_FILE))?),
    };
    let disambiguator = if config.disambiguate { Some(load_disambiguator(&dir.join(DISAMBIGUATOR_FILE))?) } else { None };
    Ok(Models { disambiguator, ranker, generator })
}

pub fn training_meta<R: serde::Serialize>(seed: u64, config: &impl serde::Serialize, report: &R) -> serde_json::Value {
    json!({ "seed": seed, "config": config, "report": report })
}
