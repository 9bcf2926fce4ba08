//! Contrastive candidate ranker.
//!
//! Each training list is one question with its gold form first and sampled
//! negatives after it; the loss is the negative log-softmax of the gold
//! score within the list. After a few warm-start epochs on uniform
//! negatives, negatives are re-drawn from the model's own highest-scoring
//! wrong candidates mixed with uniform ones.

use kbqa_neural::{
    logsumexp, Adam, AdamConfig, EncoderScorer, Graph, NodeId, ScorerConfig, Vocabulary,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Example;
use crate::enumerate::{enumerate_candidates, position_of, Candidate, EnumConfig};
use crate::kb::KnowledgeBase;
use crate::sexpr::{semantically_equal, Denotation, SExpr};
use crate::text::{slot_question, Slots};
use crate::{Error, Result};

/// `-(s_gold - logsumexp(s_gold, s_neg...))`; the gold score comes first.
pub fn ranker_loss(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Invalid("ranker loss needs the gold score".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Invalid(format!("non-finite score in {scores:?}")));
    }
    Ok((logsumexp(scores) - scores[0]).max(0.0))
}

/// Graph version of [`ranker_loss`] over an `N x 1` score column.
pub fn listwise_loss(g: &mut Graph, scores: NodeId) -> Result<NodeId> {
    let row = g.transpose(scores);
    let lp = g.log_softmax_rows(row);
    let gold = g.pick(lp, &[(0, 0)])?;
    Ok(g.scale(gold, -1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NegativeMode {
    Random,
    Bootstrap,
}

/// Draws up to `n` non-gold indices of a pool of `pool_size`.
///
/// Random mode samples uniformly without replacement. Bootstrap mode takes
/// the `ceil(n/2)` highest-scoring non-gold candidates (ties by index) and
/// fills the rest uniformly from the remainder.
pub fn sample_negatives(
    pool_size: usize,
    gold: Option<usize>,
    scores: Option<&[f64]>,
    n: usize,
    mode: NegativeMode,
    rng: &mut impl Rng,
) -> Vec<usize> {
    let others: Vec<usize> = (0..pool_size).filter(|&i| Some(i) != gold).collect();
    if others.len() <= n {
        return others;
    }
    match (mode, scores) {
        (NegativeMode::Bootstrap, Some(scores)) => {
            let mut by_score = others.clone();
            by_score.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            let hard = n.div_ceil(2);
            let mut out: Vec<usize> = by_score[..hard].to_vec();
            let rest = &by_score[hard..];
            out.extend(rand::seq::index::sample(rng, rest.len(), n - hard).into_iter().map(|i| rest[i]));
            out
        }
        _ => rand::seq::index::sample(rng, others.len(), n).into_iter().map(|i| others[i]).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankerConfig {
    pub scorer: ScorerConfig,
    pub epochs: usize,
    pub lr: f64,
    pub negatives: usize,
    /// Lists whose gradients are summed before one optimizer step.
    pub questions_per_step: usize,
    pub warm_start_epochs: usize,
    pub bootstrap_every: usize,
    pub sampling: NegativeMode,
    pub clip_norm: Option<f64>,
    pub enumeration: EnumConfig,
}

impl Default for RankerConfig {
    fn default() -> Self {
        Self {
            scorer: ScorerConfig::default(),
            epochs: 4,
            lr: 2e-3,
            negatives: 96,
            questions_per_step: 8,
            warm_start_epochs: 2,
            bootstrap_every: 1,
            sampling: NegativeMode::Bootstrap,
            clip_norm: Some(5.0),
            enumeration: EnumConfig::default(),
        }
    }
}

/// A question prepared for ranking: slotted tokens and its candidate pool.
#[derive(Debug, Clone)]
pub struct RankerExample {
    pub id: String,
    pub tokens: Vec<String>,
    pub slots: Slots,
    pub pool: Vec<Candidate>,
    /// Index of the gold form in `pool`, if enumeration covers it.
    pub gold: Option<usize>,
    pub gold_expr: SExpr,
}

/// Enumerates pools from gold entity links.
pub fn prepare_examples(examples: &[Example], kb: &KnowledgeBase, cfg: &EnumConfig) -> Result<Vec<RankerExample>> {
    examples
        .iter()
        .map(|ex| {
            let gold_expr = ex.gold_expr(kb)?;
            let (tokens, slots) = slot_question(&ex.question, &ex.gold_links());
            let pool = enumerate_candidates(kb, &ex.gold_entities(), cfg).candidates;
            let gold = position_of(&pool, &gold_expr);
            Ok(RankerExample { id: ex.id.clone(), tokens, slots, pool, gold, gold_expr })
        })
        .collect()
}

/// Anything that can score a candidate pool for a question.
pub trait CandidateScorer {
    fn score_pool(&self, tokens: &[String], slots: &Slots, pool: &[Candidate]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone)]
pub struct Ranker {
    pub scorer: EncoderScorer,
}

const SCORE_CHUNK: usize = 256;

impl Ranker {
    pub fn new(config: ScorerConfig, vocab: Vocabulary, seed: u64) -> Self {
        Self { scorer: EncoderScorer::new(config, vocab, seed) }
    }

    pub fn encode(&self, tokens: &[String], slots: &Slots, expr: &SExpr) -> Vec<usize> {
        let v = &self.scorer.vocab;
        let mut ids = v.encode(tokens);
        ids.push(Vocabulary::SEP);
        ids.extend(v.encode(&slots.encode_lf(expr)));
        ids
    }
}

impl CandidateScorer for Ranker {
    fn score_pool(&self, tokens: &[String], slots: &Slots, pool: &[Candidate]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(pool.len());
        for chunk in pool.chunks(SCORE_CHUNK) {
            let seqs: Vec<Vec<usize>> = chunk.iter().map(|c| self.encode(tokens, slots, &c.expr)).collect();
            out.extend(self.scorer.score_batch(&seqs)?);
        }
        Ok(out)
    }
}

/// Uniform random scores, fixed by the seed, the question and the
/// candidate's printed form.
#[derive(Debug, Clone, Copy)]
pub struct RandomScorer {
    pub seed: u64,
}

fn fnv(bytes: impl IntoIterator<Item = u8>, mut h: u64) -> u64 {
    for b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

impl CandidateScorer for RandomScorer {
    fn score_pool(&self, tokens: &[String], _slots: &Slots, pool: &[Candidate]) -> Result<Vec<f64>> {
        let base = fnv(tokens.iter().flat_map(|t| t.bytes().chain([0])), 0xcbf29ce484222325 ^ self.seed);
        Ok(pool
            .iter()
            .map(|c| ChaCha8Rng::seed_from_u64(fnv(c.expr.print().bytes(), base)).gen::<f64>())
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub expr: SExpr,
    pub score: f64,
    pub denotation: Option<Denotation>,
}

/// Candidates by descending score; ties by canonical print.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub items: Vec<RankedCandidate>,
}

impl RankedList {
    pub fn from_scores(pool: Vec<Candidate>, scores: &[f64]) -> Self {
        let mut items: Vec<(String, RankedCandidate)> = pool
            .into_iter()
            .zip(scores)
            .map(|(c, &s)| {
                (c.expr.canonical().print(), RankedCandidate { expr: c.expr, score: s, denotation: c.denotation })
            })
            .collect();
        items.sort_by(|a, b| b.1.score.total_cmp(&a.1.score).then_with(|| a.0.cmp(&b.0)));
        Self { items: items.into_iter().map(|(_, c)| c).collect() }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn top(&self, k: usize) -> &[RankedCandidate] {
        &self.items[..k.min(self.items.len())]
    }
}

pub fn rank(scorer: &dyn CandidateScorer, tokens: &[String], slots: &Slots, pool: Vec<Candidate>) -> Result<RankedList> {
    if pool.is_empty() {
        return Ok(RankedList::default());
    }
    let scores = scorer.score_pool(tokens, slots, &pool)?;
    Ok(RankedList::from_scores(pool, &scores))
}

/// One optimizer over listwise losses, shared by the ranker and the
/// entity disambiguator.
pub struct ListwiseTrainer {
    pub model: EncoderScorer,
    opt: Adam,
    lr: f64,
    per_step: usize,
}

impl ListwiseTrainer {
    pub fn new(model: EncoderScorer, lr: f64, per_step: usize, clip_norm: Option<f64>) -> Self {
        let opt = Adam::new(&model.params, AdamConfig { clip_norm, ..Default::default() });
        Self { model, opt, lr, per_step: per_step.max(1) }
    }

    /// One pass over `lists` (gold sequence first) in the given order;
    /// returns the mean list loss. Single-item lists contribute zero.
    pub fn epoch(&mut self, lists: &[Vec<Vec<usize>>], order: &[usize]) -> Result<f64> {
        let mut total = 0.0;
        let mut pending = 0;
        for &i in order {
            let list = &lists[i];
            if list.len() < 2 {
                continue;
            }
            let grads = {
                let mut g = Graph::new(&self.model.params);
                let scores = self.model.forward(&mut g, list)?;
                let loss = listwise_loss(&mut g, scores)?;
                total += g.value(loss).item();
                let scaled = g.scale(loss, 1.0 / self.per_step as f64);
                g.backward(scaled)?
            };
            self.model.params.accumulate(&grads)?;
            pending += 1;
            if pending == self.per_step {
                self.opt.step(&mut self.model.params, self.lr)?;
                pending = 0;
            }
        }
        if pending > 0 {
            self.opt.step(&mut self.model.params, self.lr)?;
        }
        Ok(if order.is_empty() { 0.0 } else { total / order.len() as f64 })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    /// Examples used for training.
    pub used: usize,
    /// Examples left out (gold not in the pool).
    pub skipped: usize,
}

pub fn train_ranker(examples: &[RankerExample], vocab: Vocabulary, config: &RankerConfig, seed: u64) -> Result<(Ranker, TrainReport)> {
    if examples.is_empty() {
        return Err(Error::Invalid("ranker training set is empty".into()));
    }
    let usable: Vec<&RankerExample> = examples.iter().filter(|e| e.gold.is_some()).collect();
    let mut report = TrainReport { used: usable.len(), skipped: examples.len() - usable.len(), ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ranker = Ranker::new(config.scorer, vocab, seed);
    let mut trainer = ListwiseTrainer::new(ranker.scorer, config.lr, config.questions_per_step, config.clip_norm);
    let mut negatives: Vec<Vec<usize>> = vec![Vec::new(); usable.len()];
    for epoch in 0..config.epochs {
        let bootstrap = config.sampling == NegativeMode::Bootstrap && epoch >= config.warm_start_epochs;
        let resample = !bootstrap || (epoch - config.warm_start_epochs) % config.bootstrap_every.max(1) == 0;
        if resample {
            let current = Ranker { scorer: trainer.model.clone() };
            for (i, ex) in usable.iter().enumerate() {
                let scores = if bootstrap { Some(current.score_pool(&ex.tokens, &ex.slots, &ex.pool)?) } else { None };
                let mode = if bootstrap { NegativeMode::Bootstrap } else { NegativeMode::Random };
                negatives[i] = sample_negatives(ex.pool.len(), ex.gold, scores.as_deref(), config.negatives, mode, &mut rng);
            }
        }
        let current = Ranker { scorer: trainer.model.clone() };
        let lists: Vec<Vec<Vec<usize>>> = usable
            .iter()
            .zip(&negatives)
            .map(|(ex, negs)| {
                let gold = ex.gold.expect("usable examples have gold");
                std::iter::once(gold)
                    .chain(negs.iter().copied())
                    .map(|j| current.encode(&ex.tokens, &ex.slots, &ex.pool[j].expr))
                    .collect()
            })
            .collect();
        let mut order: Vec<usize> = (0..lists.len()).collect();
        order.shuffle(&mut rng);
        report.epoch_losses.push(trainer.epoch(&lists, &order)?);
    }
    Ok((Ranker { scorer: trainer.model }, report))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HitsReport {
    pub covered: usize,
    pub total: usize,
    /// `(k, fraction of covered examples whose gold is in the top k)`.
    pub hits: Vec<(usize, f64)>,
}

impl HitsReport {
    pub fn at(&self, k: usize) -> f64 {
        self.hits.iter().find(|(kk, _)| *kk == k).map_or(0.0, |(_, v)| *v)
    }
}

/// Hit@k over examples whose pool covers the gold form.
pub fn hits_at_k(scorer: &dyn CandidateScorer, examples: &[RankerExample], ks: &[usize]) -> Result<HitsReport> {
    let mut counts = vec![0usize; ks.len()];
    let mut covered = 0;
    for ex in examples {
        let Some(_) = ex.gold else { continue };
        covered += 1;
        let ranked = rank(scorer, &ex.tokens, &ex.slots, ex.pool.clone())?;
        let gold = ex.gold_expr.canonical();
        let pos = ranked.items.iter().position(|c| semantically_equal(&c.expr, &gold));
        for (slot, &k) in counts.iter_mut().zip(ks) {
            if pos.is_some_and(|p| p < k) {
                *slot += 1;
            }
        }
    }
    let hits = ks
        .iter()
        .zip(counts)
        .map(|(&k, c)| (k, if covered == 0 { 0.0 } else { c as f64 / covered as f64 }))
        .collect();
    Ok(HitsReport { covered, total: examples.len(), hits })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_values() {
        // Oracle: direct evaluation of -ln(e^2 / (e^2 + 2)).
        let direct = -((2.0f64).exp() / ((2.0f64).exp() + 2.0)).ln();
        assert!((ranker_loss(&[2.0, 0.0, 0.0]).unwrap() - direct).abs() < 1e-12);
        assert!((direct - 0.2395).abs() < 5e-5);
        assert_eq!(ranker_loss(&[1.3]).unwrap(), 0.0);
        let n = 7;
        let uniform = ranker_loss(&vec![0.4; n + 1]).unwrap();
        assert!((uniform - ((n + 1) as f64).ln()).abs() < 1e-12);
        assert!(ranker_loss(&[f64::NAN, 0.0]).is_err());
        assert!(ranker_loss(&[]).is_err());
    }

    #[test]
    fn graph_loss_matches_value() {
        let store = kbqa_neural::ParamStore::new();
        let mut g = Graph::new(&store);
        let s = g.input(kbqa_neural::Tensor::matrix(3, 1, vec![2.0, 0.0, 0.0]));
        let l = listwise_loss(&mut g, s).unwrap();
        assert!((g.value(l).item() - ranker_loss(&[2.0, 0.0, 0.0]).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn small_pool_is_returned_whole() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let got = sample_negatives(4, Some(1), None, 96, NegativeMode::Random, &mut rng);
        assert_eq!(got, vec![0, 2, 3]);
    }

    #[test]
    fn bootstrap_keeps_the_top_wrong_candidate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let scores = [0.1, 5.0, 0.3, 9.0, 0.2, 0.0, 0.4, 0.5];
        for _ in 0..50 {
            let got = sample_negatives(8, Some(3), Some(&scores), 3, NegativeMode::Bootstrap, &mut rng);
            assert_eq!(got.len(), 3);
            assert!(got.contains(&1) && !got.contains(&3));
            let mut d = got.clone();
            d.sort();
            d.dedup();
            assert_eq!(d.len(), 3);
        }
    }

    #[test]
    fn ranked_list_breaks_ties_by_print() {
        let c = |s: &str| Candidate::enumerated(crate::sexpr::parse(s).unwrap(), Denotation::empty());
        let pool = vec![c("(JOIN b.x m.1)"), c("(JOIN a.x m.1)"), c("(JOIN c.x m.1)")];
        let ranked = RankedList::from_scores(pool, &[1.0, 1.0, 2.0]);
        let order: Vec<String> = ranked.items.iter().map(|c| c.expr.print()).collect();
        assert_eq!(order, vec!["(JOIN c.x m.1)", "(JOIN a.x m.1)", "(JOIN b.x m.1)"]);
    }
}
