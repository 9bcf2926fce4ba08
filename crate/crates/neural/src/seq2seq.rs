//! Attention encoder with a gated-recurrent decoder.
//!
//! The encoder adds fixed sinusoidal positions to token embeddings and runs
//! one self-attention block (or a per-token feed-forward block for the
//! mean-pool variant). The decoder is a GRU fed with the previous token and
//! previous attention context; it attends over encoder states by dot product
//! and predicts through the transposed embedding table, so the input and
//! output vocabularies share one set of vectors.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::beam::{self, Hypothesis, StepModel};
use crate::graph::log_softmax;
use crate::{EncoderKind, Graph, NeuralError, NodeId, ParamId, ParamStore, Result, Tensor, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Seq2SeqConfig {
    pub dim: usize,
    pub hidden: usize,
    pub encoder: EncoderKind,
    pub max_src_len: usize,
    pub max_tgt_len: usize,
}

impl Default for Seq2SeqConfig {
    fn default() -> Self {
        Self { dim: 64, hidden: 128, encoder: EncoderKind::Attention, max_src_len: 256, max_tgt_len: 64 }
    }
}

#[derive(Debug, Clone, Copy)]
struct Ids {
    embed: ParamId,
    wq: Option<ParamId>,
    wk: Option<ParamId>,
    wv: Option<ParamId>,
    wo: Option<ParamId>,
    ff1: ParamId,
    ff1_b: ParamId,
    ff2: ParamId,
    ff2_b: ParamId,
    init: ParamId,
    init_b: ParamId,
    gru_x: ParamId,
    gru_h: ParamId,
    gru_b: ParamId,
    gru_hb: ParamId,
    combine: ParamId,
    combine_b: ParamId,
    out_b: ParamId,
}

#[derive(Debug, Clone)]
pub struct EncoderDecoder {
    pub config: Seq2SeqConfig,
    pub vocab: Vocabulary,
    pub params: ParamStore,
    ids: Ids,
}

/// Encoder output recorded in a graph.
#[derive(Debug, Clone, Copy)]
pub struct Encoded {
    pub states: NodeId,
    pub init: NodeId,
}

/// Decoder recurrent state: hidden vector and last attention context.
#[derive(Debug, Clone, Copy)]
pub struct DecoderState {
    pub hidden: NodeId,
    pub context: NodeId,
}

fn xavier(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Fixed sinusoidal position table, `len x dim`.
pub fn sinusoidal_positions(len: usize, dim: usize) -> Tensor {
    let mut data = Vec::with_capacity(len * dim);
    for p in 0..len {
        for i in 0..dim {
            let rate = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / dim as f64);
            let angle = p as f64 * rate;
            data.push(if i % 2 == 0 { angle.sin() } else { angle.cos() } * 0.5);
        }
    }
    Tensor::matrix(len, dim, data)
}

impl EncoderDecoder {
    pub fn new(config: Seq2SeqConfig, vocab: Vocabulary, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (v, d, h) = (vocab.len(), config.dim, config.hidden);
        let mut p = ParamStore::new();
        let embed = p.add_uniform("embed", v, d, (3.0 / d as f64).sqrt(), &mut rng);
        let attention = config.encoder == EncoderKind::Attention;
        let mut attn = |p: &mut ParamStore, name: &str| {
            attention.then(|| p.add_uniform(name, d, d, xavier(d, d), &mut rng))
        };
        let wq = attn(&mut p, "enc.q");
        let wk = attn(&mut p, "enc.k");
        let wv = attn(&mut p, "enc.v");
        let wo = attn(&mut p, "enc.o");
        let ff1 = p.add_uniform("enc.ff1", d, h, xavier(d, h), &mut rng);
        let ff1_b = p.add_zeros("enc.ff1.b", 1, h);
        let ff2 = p.add_uniform("enc.ff2", h, d, xavier(h, d), &mut rng);
        let ff2_b = p.add_zeros("enc.ff2.b", 1, d);
        let init = p.add_uniform("dec.init", d, d, xavier(d, d), &mut rng);
        let init_b = p.add_zeros("dec.init.b", 1, d);
        let gru_x = p.add_uniform("dec.gru.x", 2 * d, 3 * d, xavier(2 * d, 3 * d), &mut rng);
        let gru_h = p.add_uniform("dec.gru.h", d, 3 * d, xavier(d, 3 * d), &mut rng);
        let gru_b = p.add_zeros("dec.gru.b", 1, 3 * d);
        let gru_hb = p.add_zeros("dec.gru.hb", 1, 3 * d);
        let combine = p.add_uniform("dec.combine", 2 * d, d, xavier(2 * d, d), &mut rng);
        let combine_b = p.add_zeros("dec.combine.b", 1, d);
        let out_b = p.add_zeros("dec.out.b", 1, v);
        let ids = Ids {
            embed,
            wq,
            wk,
            wv,
            wo,
            ff1,
            ff1_b,
            ff2,
            ff2_b,
            init,
            init_b,
            gru_x,
            gru_h,
            gru_b,
            gru_hb,
            combine,
            combine_b,
            out_b,
        };
        Self { config, vocab, params: p, ids }
    }

    pub fn with_params(config: Seq2SeqConfig, vocab: Vocabulary, params: &ParamStore) -> Result<Self> {
        let mut m = Self::new(config, vocab, 0);
        m.params.copy_values_from(params)?;
        Ok(m)
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        let v = self.vocab.len();
        match tokens.iter().find(|&&t| t >= v) {
            Some(&t) => Err(NeuralError::IndexOutOfRange { index: t, size: v }),
            None => Ok(()),
        }
    }

    pub fn encode(&self, g: &mut Graph, src: &[usize]) -> Result<Encoded> {
        let mut src = src[..src.len().min(self.config.max_src_len)].to_vec();
        if src.is_empty() {
            src.push(Vocabulary::EOS);
        }
        self.check_tokens(&src)?;
        let ids = self.ids;
        let d = self.config.dim;
        let embed = g.param(ids.embed);
        let tok = g.gather(embed, &src)?;
        let pos = g.input(sinusoidal_positions(src.len(), d));
        let x = g.add(tok, pos)?;
        let h = if self.config.encoder == EncoderKind::Attention {
            let wq = g.param(ids.wq.expect("attention params"));
            let wk = g.param(ids.wk.expect("attention params"));
            let wv = g.param(ids.wv.expect("attention params"));
            let wo = g.param(ids.wo.expect("attention params"));
            let q = g.matmul(x, wq)?;
            let k = g.matmul(x, wk)?;
            let v = g.matmul(x, wv)?;
            let s = g.matmul_t(q, k)?;
            let s = g.scale(s, 1.0 / (d as f64).sqrt());
            let a = g.softmax_rows(s);
            let c = g.matmul(a, v)?;
            let o = g.matmul(c, wo)?;
            g.add(x, o)?
        } else {
            x
        };
        let (w1, b1, w2, b2) = (g.param(ids.ff1), g.param(ids.ff1_b), g.param(ids.ff2), g.param(ids.ff2_b));
        let f = g.matmul(h, w1)?;
        let f = g.add(f, b1)?;
        let f = g.relu(f);
        let f = g.matmul(f, w2)?;
        let f = g.add(f, b2)?;
        let states = g.add(h, f)?;
        let pooled = g.mean_rows(states);
        let (wi, bi) = (g.param(ids.init), g.param(ids.init_b));
        let init = g.matmul(pooled, wi)?;
        let init = g.add(init, bi)?;
        let init = g.tanh(init);
        Ok(Encoded { states, init })
    }

    pub fn start_state(&self, g: &mut Graph, enc: &Encoded) -> DecoderState {
        let ctx = g.input(Tensor::zeros(&[1, self.config.dim]));
        DecoderState { hidden: enc.init, context: ctx }
    }

    /// One decoder step consuming `token`; returns the new state and the
    /// `1 x V` log-distribution of the following token.
    pub fn step(&self, g: &mut Graph, enc: &Encoded, state: DecoderState, token: usize) -> Result<(DecoderState, NodeId)> {
        self.check_tokens(&[token])?;
        let ids = self.ids;
        let d = self.config.dim;
        let embed = g.param(ids.embed);
        let e = g.gather(embed, &[token])?;
        let x = g.concat_cols(&[e, state.context])?;
        let (wx, wh, bx, bh) = (g.param(ids.gru_x), g.param(ids.gru_h), g.param(ids.gru_b), g.param(ids.gru_hb));
        let gx = g.matmul(x, wx)?;
        let gx = g.add(gx, bx)?;
        let gh = g.matmul(state.hidden, wh)?;
        let gh = g.add(gh, bh)?;
        let xz = g.slice_cols(gx, 0, d)?;
        let xr = g.slice_cols(gx, d, d)?;
        let xn = g.slice_cols(gx, 2 * d, d)?;
        let hz = g.slice_cols(gh, 0, d)?;
        let hr = g.slice_cols(gh, d, d)?;
        let hn = g.slice_cols(gh, 2 * d, d)?;
        let z = g.add(xz, hz)?;
        let z = g.sigmoid(z);
        let r = g.add(xr, hr)?;
        let r = g.sigmoid(r);
        let rn = g.mul(r, hn)?;
        let n = g.add(xn, rn)?;
        let n = g.tanh(n);
        // h' = n + z ⊙ (h - n)
        let diff = g.sub(state.hidden, n)?;
        let zd = g.mul(z, diff)?;
        let hidden = g.add(n, zd)?;

        let scores = g.matmul_t(hidden, enc.states)?;
        let scores = g.scale(scores, 1.0 / (d as f64).sqrt());
        let attn = g.softmax_rows(scores);
        let context = g.matmul(attn, enc.states)?;

        let hc = g.concat_cols(&[hidden, context])?;
        let (wc, bc) = (g.param(ids.combine), g.param(ids.combine_b));
        let o = g.matmul(hc, wc)?;
        let o = g.add(o, bc)?;
        let o = g.tanh(o);
        let logits = g.matmul_t(o, embed)?;
        let ob = g.param(ids.out_b);
        let logits = g.add(logits, ob)?;
        let logp = g.log_softmax_rows(logits);
        Ok((DecoderState { hidden, context }, logp))
    }

    /// Summed negative log-likelihood of `target` (end marker appended) and
    /// the number of predicted positions.
    pub fn sequence_nll(&self, g: &mut Graph, src: &[usize], target: &[usize]) -> Result<(NodeId, usize)> {
        let target = &target[..target.len().min(self.config.max_tgt_len.saturating_sub(1))];
        let enc = self.encode(g, src)?;
        let mut state = self.start_state(g, &enc);
        let mut prev = Vocabulary::BOS;
        let mut picks = Vec::with_capacity(target.len() + 1);
        for &t in target.iter().chain(std::iter::once(&Vocabulary::EOS)) {
            let (s, logp) = self.step(g, &enc, state, prev)?;
            picks.push(g.pick(logp, &[(0, t)])?);
            state = s;
            prev = t;
        }
        let all = g.concat_cols(&picks)?;
        let total = g.sum(all);
        Ok((g.scale(total, -1.0), picks.len()))
    }

    /// Teacher-forced token-level cross-entropy over a batch of
    /// `(source, target)` pairs: total NLL divided by predicted positions.
    pub fn batch_loss(&self, g: &mut Graph, batch: &[(Vec<usize>, Vec<usize>)]) -> Result<NodeId> {
        if batch.is_empty() {
            return Err(NeuralError::Shape("empty batch".into()));
        }
        let mut parts = Vec::with_capacity(batch.len());
        let mut count = 0;
        for (src, tgt) in batch {
            let (nll, n) = self.sequence_nll(g, src, tgt)?;
            parts.push(nll);
            count += n;
        }
        let all = g.concat_cols(&parts)?;
        let total = g.sum(all);
        Ok(g.scale(total, 1.0 / count as f64))
    }

    /// Log-probability of `target` followed by the end marker.
    pub fn sequence_log_prob(&self, src: &[usize], target: &[usize]) -> Result<f64> {
        let mut g = Graph::new(&self.params);
        let (nll, _) = self.sequence_nll(&mut g, src, target)?;
        Ok(-g.value(nll).item())
    }

    pub fn session<'a>(&'a self, src: &[usize]) -> Result<DecodeSession<'a>> {
        let mut graph = Graph::new(&self.params);
        let enc = self.encode(&mut graph, src)?;
        Ok(DecodeSession { model: self, graph, enc })
    }

    pub fn beam_search(&self, src: &[usize], beam: usize, max_len: usize) -> Result<Vec<Hypothesis>> {
        let mut s = self.session(src)?;
        Ok(beam::beam_search(&mut s, beam, max_len))
    }

    pub fn greedy(&self, src: &[usize], max_len: usize) -> Result<Hypothesis> {
        let mut s = self.session(src)?;
        Ok(beam::greedy(&mut s, max_len))
    }
}

/// Incremental decoding over one encoded source.
pub struct DecodeSession<'a> {
    model: &'a EncoderDecoder,
    graph: Graph<'a>,
    enc: Encoded,
}

impl StepModel for DecodeSession<'_> {
    type State = DecoderState;

    fn initial(&mut self) -> (DecoderState, Vec<f64>) {
        let s0 = self.model.start_state(&mut self.graph, &self.enc);
        self.advance(&s0, Vocabulary::BOS)
    }

    fn advance(&mut self, state: &DecoderState, token: usize) -> (DecoderState, Vec<f64>) {
        match self.model.step(&mut self.graph, &self.enc, *state, token) {
            Ok((s, logp)) => (s, self.graph.value(logp).data().to_vec()),
            // An unknown token id cannot come out of our own distribution;
            // treat the path as dead rather than panicking.
            Err(_) => (*state, log_softmax(&vec![f64::NEG_INFINITY; self.model.vocab.len()])),
        }
    }

    fn eos(&self) -> usize {
        Vocabulary::EOS
    }
}
