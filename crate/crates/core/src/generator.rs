//! Candidate-conditioned generation: an encoder-decoder reads the question
//! with the ranker's top candidates and writes the final logical form.

use kbqa_neural::{Adam, AdamConfig, EncoderDecoder, Graph, Seq2SeqConfig, Vocabulary};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kb::KnowledgeBase;
use crate::ranker::{rank, CandidateScorer, RankedCandidate, RankerExample};
use crate::sexpr::{parse_with, SExpr};
use crate::text::Slots;
use crate::{Error, Result};

/// Printed in place of a beam output that does not parse.
pub const UNPARSEABLE: &str = "<unparseable>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub model: Seq2SeqConfig,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub top_k: usize,
    pub beam: usize,
    pub clip_norm: Option<f64>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self { model: Seq2SeqConfig::default(), epochs: 10, lr: 2e-3, batch_size: 8, top_k: 5, beam: 10, clip_norm: Some(5.0) }
    }
}

/// Question tokens followed by `; c1 ; c2 ...` for the top `k` candidates,
/// all in slotted form.
pub fn build_input(tokens: &[String], slots: &Slots, ranked: &[RankedCandidate], k: usize) -> Vec<String> {
    let mut out = tokens.to_vec();
    for c in ranked.iter().take(k) {
        out.push(kbqa_neural::vocab::SEP.to_string());
        out.extend(slots.encode_lf(&c.expr));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorExample {
    pub id: String,
    pub source: Vec<String>,
    pub target: Vec<String>,
}

/// Pairs each question (with the given ranker's top `k` over its gold-linked
/// pool) with the slotted canonical gold form.
pub fn prepare_generator_examples(examples: &[RankerExample], ranker: &dyn CandidateScorer, k: usize) -> Result<Vec<GeneratorExample>> {
    examples
        .iter()
        .map(|ex| {
            let ranked = rank(ranker, &ex.tokens, &ex.slots, ex.pool.clone())?;
            Ok(GeneratorExample {
                id: ex.id.clone(),
                source: build_input(&ex.tokens, &ex.slots, ranked.top(k), k),
                target: ex.slots.encode_lf(&ex.gold_expr.canonical()),
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Generator {
    pub model: EncoderDecoder,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GeneratorReport {
    pub epoch_losses: Vec<f64>,
    pub examples: usize,
}

pub fn train_generator(
    examples: &[GeneratorExample],
    vocab: Vocabulary,
    config: &GeneratorConfig,
    seed: u64,
) -> Result<(Generator, GeneratorReport)> {
    if examples.is_empty() {
        return Err(Error::Invalid("generator training set is empty".into()));
    }
    let mut model = EncoderDecoder::new(config.model, vocab, seed);
    let pairs: Vec<(Vec<usize>, Vec<usize>)> =
        examples.iter().map(|e| (model.vocab.encode(&e.source), model.vocab.encode(&e.target))).collect();
    let mut opt = Adam::new(&model.params, AdamConfig { clip_norm: config.clip_norm, ..Default::default() });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GeneratorReport { examples: examples.len(), ..Default::default() };
    let bs = config.batch_size.max(1);
    for _ in 0..config.epochs {
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.shuffle(&mut rng);
        let (mut total, mut batches) = (0.0, 0);
        for chunk in order.chunks(bs) {
            let batch: Vec<(Vec<usize>, Vec<usize>)> = chunk.iter().map(|&i| pairs[i].clone()).collect();
            let grads = {
                let mut g = Graph::new(&model.params);
                let loss = model.batch_loss(&mut g, &batch)?;
                total += g.value(loss).item();
                g.backward(loss)?
            };
            model.params.accumulate(&grads)?;
            opt.step(&mut model.params, config.lr)?;
            batches += 1;
        }
        report.epoch_losses.push(total / batches as f64);
    }
    Ok((Generator { model }, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedBeam {
    /// Decoded text with slots restored.
    pub text: String,
    /// `None` when the text does not parse against the KB.
    pub expr: Option<SExpr>,
    pub log_prob: f64,
}

impl GeneratedBeam {
    pub fn printed(&self) -> String {
        match &self.expr {
            Some(e) => e.print(),
            None => UNPARSEABLE.to_string(),
        }
    }
}

impl Generator {
    /// Beam-decodes from the question and ranked candidates; beams come back
    /// in descending log-probability. An empty `ranked` conditions on the
    /// question alone.
    pub fn generate(
        &self,
        kb: &KnowledgeBase,
        tokens: &[String],
        slots: &Slots,
        ranked: &[RankedCandidate],
        top_k: usize,
        beam: usize,
    ) -> Result<Vec<GeneratedBeam>> {
        let source = build_input(tokens, slots, ranked, top_k);
        let src = self.model.vocab.encode(&source);
        let hyps = self.model.beam_search(&src, beam, self.model.config.max_tgt_len)?;
        Ok(hyps
            .into_iter()
            .map(|h| {
                let text = slots.decode_lf(&self.model.vocab.decode(&h.tokens));
                let expr = parse_with(&text, kb).ok();
                GeneratedBeam { text, expr, log_prob: h.log_prob }
            })
            .collect())
    }
}
