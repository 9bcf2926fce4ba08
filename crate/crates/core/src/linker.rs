//! Mention detection by longest alias match, popularity-ranked entity
//! matching, and learned disambiguation over (question, entity relations).

use kbqa_neural::{EncoderScorer, ScorerConfig, Vocabulary};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Example;
use crate::kb::{EntityId, KnowledgeBase};
use crate::ranker::ListwiseTrainer;
use crate::text::{relations_text, slot_question, tokenize_relations_text, LinkedSpan};
use crate::{Error, Result};

/// Longest alias, in words, that detection will try.
const MAX_MENTION_WORDS: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    /// Character offsets, end exclusive.
    pub span: (usize, usize),
    pub surface: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityCandidate {
    pub entity: EntityId,
    pub popularity: f64,
    pub relations_text: String,
    pub disamb_score: Option<f64>,
}

fn is_boundary(c: char) -> bool {
    c.is_whitespace() || matches!(c, '?' | '!' | ',' | '.' | ';' | ':' | '"' | '\'' | '(' | ')')
}

/// Non-overlapping longest alias matches, left to right, aligned to word
/// boundaries.
pub fn detect_mentions(question: &str, kb: &KnowledgeBase) -> Vec<Mention> {
    let chars: Vec<char> = question.chars().collect();
    let lower: Vec<char> = chars.iter().map(|c| c.to_lowercase().next().unwrap_or(*c)).collect();
    let n = chars.len();
    let starts: Vec<usize> = (0..n).filter(|&i| !is_boundary(chars[i]) && (i == 0 || is_boundary(chars[i - 1]))).collect();
    let is_end = |j: usize| j > 0 && !is_boundary(chars[j - 1]) && (j == n || is_boundary(chars[j]));
    let mut out = Vec::new();
    let mut covered = 0;
    for &s in &starts {
        if s < covered {
            continue;
        }
        let mut ends = Vec::new();
        let mut words = 0;
        for j in s + 1..=n {
            if is_end(j) {
                ends.push(j);
                words += 1;
                if words == MAX_MENTION_WORDS {
                    break;
                }
            }
        }
        for &e in ends.iter().rev() {
            let key: String = lower[s..e].iter().collect();
            if !kb.aliases(&key).is_empty() {
                out.push(Mention { span: (s, e), surface: chars[s..e].iter().collect() });
                covered = e;
                break;
            }
        }
    }
    out
}

/// Top `k` alias matches by popularity, ties by entity id.
pub fn match_entities(mention: &Mention, kb: &KnowledgeBase, k: usize) -> Vec<EntityCandidate> {
    let mut matches: Vec<_> = kb.aliases(&mention.surface.to_lowercase()).to_vec();
    matches.sort_by(|a, b| b.popularity.total_cmp(&a.popularity).then_with(|| a.entity.cmp(&b.entity)));
    matches
        .into_iter()
        .take(k.max(1))
        .map(|a| EntityCandidate {
            relations_text: relations_text(kb, &a.entity),
            entity: a.entity,
            popularity: a.popularity,
            disamb_score: None,
        })
        .collect()
}

/// Scorer over `question ; relations_text` inputs.
#[derive(Debug, Clone)]
pub struct Disambiguator {
    pub scorer: EncoderScorer,
}

impl Disambiguator {
    /// The question with the mention slotted, then the entity's relations.
    pub fn encode(&self, question: &str, mention: &Mention, relations: &str) -> Vec<usize> {
        let v = &self.scorer.vocab;
        let link = LinkedSpan { span: mention.span, entity: EntityId::from("") };
        let (tokens, _) = slot_question(question, &[link]);
        let mut ids = v.encode(&tokens);
        ids.push(Vocabulary::SEP);
        ids.extend(v.encode(&tokenize_relations_text(relations)));
        ids
    }

    pub fn score(&self, question: &str, mention: &Mention, candidates: &mut [EntityCandidate]) -> Result<()> {
        let seqs: Vec<Vec<usize>> = candidates.iter().map(|c| self.encode(question, mention, &c.relations_text)).collect();
        let scores = self.scorer.score_batch(&seqs)?;
        for (c, s) in candidates.iter_mut().zip(scores) {
            c.disamb_score = Some(s);
        }
        Ok(())
    }
}

/// Best candidate by disambiguation score, then popularity, then id. With
/// no scores (or equal scores) this is the popularity choice.
pub fn choose(candidates: &[EntityCandidate]) -> Option<&EntityCandidate> {
    candidates.iter().min_by(|a, b| {
        let (sa, sb) = (a.disamb_score.unwrap_or(0.0), b.disamb_score.unwrap_or(0.0));
        sb.total_cmp(&sa)
            .then_with(|| b.popularity.total_cmp(&a.popularity))
            .then_with(|| a.entity.cmp(&b.entity))
    })
}

pub fn disambiguate(
    question: &str,
    mention: &Mention,
    candidates: &mut [EntityCandidate],
    model: &Disambiguator,
) -> Result<Option<EntityId>> {
    if candidates.len() > 1 {
        model.score(question, mention, candidates)?;
    }
    Ok(choose(candidates).map(|c| c.entity.clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkedMention {
    pub mention: Mention,
    pub candidates: Vec<EntityCandidate>,
    pub chosen: EntityId,
}

/// Detect, match the top `k`, and pick one entity per mention. Without a
/// model the most popular match wins.
pub fn link(question: &str, kb: &KnowledgeBase, model: Option<&Disambiguator>, k: usize) -> Result<Vec<LinkedMention>> {
    let mut out = Vec::new();
    for mention in detect_mentions(question, kb) {
        let mut candidates = match_entities(&mention, kb, k);
        let chosen = match model {
            Some(m) => disambiguate(question, &mention, &mut candidates, m)?,
            None => choose(&candidates).map(|c| c.entity.clone()),
        };
        if let Some(chosen) = chosen {
            out.push(LinkedMention { mention, candidates, chosen });
        }
    }
    Ok(out)
}

pub fn linked_spans(links: &[LinkedMention]) -> Vec<LinkedSpan> {
    links.iter().map(|l| LinkedSpan { span: l.mention.span, entity: l.chosen.clone() }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DisambiguatorConfig {
    pub scorer: ScorerConfig,
    pub epochs: usize,
    pub lr: f64,
    pub questions_per_step: usize,
    pub top_k: usize,
    pub clip_norm: Option<f64>,
}

impl Default for DisambiguatorConfig {
    fn default() -> Self {
        Self { scorer: ScorerConfig::default(), epochs: 6, lr: 2e-3, questions_per_step: 8, top_k: 5, clip_norm: Some(5.0) }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DisambiguationReport {
    pub epoch_losses: Vec<f64>,
    pub mentions: usize,
    /// Mentions whose gold entity was not among the top matches.
    pub skipped: usize,
    /// Mentions with a single match: no loss, trivially correct.
    pub single: usize,
}

struct GoldMention<'a> {
    question: &'a str,
    mention: Mention,
    candidates: Vec<EntityCandidate>,
    gold: usize,
}

fn gold_mentions<'a>(examples: &'a [Example], kb: &KnowledgeBase, k: usize, report: &mut DisambiguationReport) -> Vec<GoldMention<'a>> {
    let mut out = Vec::new();
    for ex in examples {
        for m in &ex.entities {
            report.mentions += 1;
            let mention = Mention { span: (m.span[0], m.span[1]), surface: m.surface.clone() };
            let candidates = match_entities(&mention, kb, k);
            match candidates.iter().position(|c| c.entity == m.id) {
                None => report.skipped += 1,
                Some(gold) => {
                    if candidates.len() == 1 {
                        report.single += 1;
                    }
                    out.push(GoldMention { question: &ex.question, mention, candidates, gold });
                }
            }
        }
    }
    out
}

/// Trains with the gold entity as positive and the other top-`k` matches
/// as negatives.
pub fn train_disambiguator(
    examples: &[Example],
    kb: &KnowledgeBase,
    vocab: Vocabulary,
    config: &DisambiguatorConfig,
    seed: u64,
) -> Result<(Disambiguator, DisambiguationReport)> {
    if examples.is_empty() {
        return Err(Error::Invalid("disambiguation training set is empty".into()));
    }
    let mut report = DisambiguationReport::default();
    let golds = gold_mentions(examples, kb, config.top_k, &mut report);
    let model = Disambiguator { scorer: EncoderScorer::new(config.scorer, vocab, seed) };
    let lists: Vec<Vec<Vec<usize>>> = golds
        .iter()
        .map(|g| {
            let mut order: Vec<usize> = vec![g.gold];
            order.extend((0..g.candidates.len()).filter(|&i| i != g.gold));
            order.iter().map(|&i| model.encode(g.question, &g.mention, &g.candidates[i].relations_text)).collect()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trainer = ListwiseTrainer::new(model.scorer, config.lr, config.questions_per_step, config.clip_norm);
    for _ in 0..config.epochs {
        let mut order: Vec<usize> = (0..lists.len()).collect();
        order.shuffle(&mut rng);
        report.epoch_losses.push(trainer.epoch(&lists, &order)?);
    }
    Ok((Disambiguator { scorer: trainer.model }, report))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkingAccuracy {
    pub mentions: usize,
    pub correct: usize,
    /// Mentions with at least two matches.
    pub ambiguous: usize,
    pub ambiguous_correct: usize,
}

impl LinkingAccuracy {
    pub fn accuracy(&self) -> f64 {
        ratio(self.correct, self.mentions)
    }

    pub fn ambiguous_accuracy(&self) -> f64 {
        ratio(self.ambiguous_correct, self.ambiguous)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Accuracy of the entity chosen for each gold mention span, with or
/// without a disambiguation model.
pub fn linking_accuracy(examples: &[Example], kb: &KnowledgeBase, model: Option<&Disambiguator>, k: usize) -> Result<LinkingAccuracy> {
    let mut acc = LinkingAccuracy::default();
    for ex in examples {
        for m in &ex.entities {
            let mention = Mention { span: (m.span[0], m.span[1]), surface: m.surface.clone() };
            let mut candidates = match_entities(&mention, kb, k);
            let chosen = match model {
                Some(d) => disambiguate(&ex.question, &mention, &mut candidates, d)?,
                None => choose(&candidates).map(|c| c.entity.clone()),
            };
            let ok = chosen.as_ref() == Some(&m.id);
            acc.mentions += 1;
            acc.correct += usize::from(ok);
            if candidates.len() > 1 {
                acc.ambiguous += 1;
                acc.ambiguous_correct += usize::from(ok);
            }
        }
    }
    Ok(acc)
}
