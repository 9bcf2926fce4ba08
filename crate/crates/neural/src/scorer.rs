//! Sequence scorer: encode a token sequence, pool it at the leading
//! pooling position, and project to one logit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Graph, NodeId, ParamId, ParamStore, Result, Tensor, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    /// Separate means of the token embeddings before and after the first
    /// separator, combined as `[a, b, a * b]` and fed to a two-layer
    /// feed-forward net.
    #[default]
    MeanPool,
    /// One single-head self-attention block with a feed-forward sublayer.
    Attention,
}

impl std::str::FromStr for EncoderKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "mean-pool" => Ok(Self::MeanPool),
            "attention" => Ok(Self::Attention),
            other => Err(format!("unknown encoder kind {other:?} (mean-pool|attention)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScorerConfig {
    pub dim: usize,
    pub hidden: usize,
    pub encoder: EncoderKind,
    pub max_len: usize,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self { dim: 64, hidden: 128, encoder: EncoderKind::MeanPool, max_len: 256 }
    }
}

#[derive(Debug, Clone, Copy)]
struct ScorerParams {
    embed: ParamId,
    // attention only
    pos: Option<ParamId>,
    wq: Option<ParamId>,
    wk: Option<ParamId>,
    wv: Option<ParamId>,
    wo: Option<ParamId>,
    ff1: ParamId,
    ff1_b: ParamId,
    ff2: ParamId,
    ff2_b: ParamId,
    proj: ParamId,
    proj_b: ParamId,
}

/// `score(tokens) = proj · pool(encode([CLS] ++ tokens)) + b`.
#[derive(Debug, Clone)]
pub struct EncoderScorer {
    pub config: ScorerConfig,
    pub vocab: Vocabulary,
    pub params: ParamStore,
    ids: ScorerParams,
}

/// Splits `[CLS] a.. SEP b..` at the first separator. An absent or empty
/// second segment becomes the lone separator.
fn split_segments(seq: &[usize]) -> (Vec<usize>, Vec<usize>) {
    match seq.iter().position(|&t| t == Vocabulary::SEP) {
        Some(i) if i + 1 < seq.len() => (seq[..i].to_vec(), seq[i + 1..].to_vec()),
        Some(i) => (seq[..i].to_vec(), vec![Vocabulary::SEP]),
        None => (seq.to_vec(), vec![Vocabulary::SEP]),
    }
}

fn xavier(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

impl EncoderScorer {
    pub fn new(config: ScorerConfig, vocab: Vocabulary, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (v, d, h) = (vocab.len(), config.dim, config.hidden);
        let mut p = ParamStore::new();
        let embed = p.add_uniform("embed", v, d, (3.0 / d as f64).sqrt(), &mut rng);
        let attention = config.encoder == EncoderKind::Attention;
        let (pos, wq, wk, wv, wo) = if attention {
            (
                Some(p.add_uniform("pos", config.max_len, d, 0.1, &mut rng)),
                Some(p.add_uniform("attn.q", d, d, xavier(d, d), &mut rng)),
                Some(p.add_uniform("attn.k", d, d, xavier(d, d), &mut rng)),
                Some(p.add_uniform("attn.v", d, d, xavier(d, d), &mut rng)),
                Some(p.add_uniform("attn.o", d, d, xavier(d, d), &mut rng)),
            )
        } else {
            (None, None, None, None, None)
        };
        let (ff1_in, ff1_out, ff2_in, ff2_out) = if attention { (d, h, h, d) } else { (3 * d, h, h, h) };
        let ff1 = p.add_uniform("ff1", ff1_in, ff1_out, xavier(ff1_in, ff1_out), &mut rng);
        let ff1_b = p.add_zeros("ff1.b", 1, ff1_out);
        let ff2 = p.add_uniform("ff2", ff2_in, ff2_out, xavier(ff2_in, ff2_out), &mut rng);
        let ff2_b = p.add_zeros("ff2.b", 1, ff2_out);
        let proj = p.add_uniform("proj", ff2_out, 1, xavier(ff2_out, 1), &mut rng);
        let proj_b = p.add_zeros("proj.b", 1, 1);
        let ids = ScorerParams { embed, pos, wq, wk, wv, wo, ff1, ff1_b, ff2, ff2_b, proj, proj_b };
        Self { config, vocab, params: p, ids }
    }

    /// Same architecture with every parameter set to zero.
    pub fn zeroed(config: ScorerConfig, vocab: Vocabulary) -> Self {
        let mut s = Self::new(config, vocab, 0);
        s.params.zero_values();
        s
    }

    pub fn with_params(config: ScorerConfig, vocab: Vocabulary, params: &ParamStore) -> Result<Self> {
        let mut s = Self::new(config, vocab, 0);
        s.params.copy_values_from(params)?;
        Ok(s)
    }

    fn with_cls(&self, tokens: &[usize]) -> Vec<usize> {
        let mut seq = Vec::with_capacity(tokens.len() + 1);
        seq.push(Vocabulary::CLS);
        seq.extend(tokens.iter().take(self.config.max_len - 1));
        seq
    }

    /// Records the forward pass for every sequence; returns an `N x 1` node.
    pub fn forward(&self, g: &mut Graph, seqs: &[Vec<usize>]) -> Result<NodeId> {
        let seqs: Vec<Vec<usize>> = seqs.iter().map(|s| self.with_cls(s)).collect();
        let ids = self.ids;
        let embed = g.param(ids.embed);
        let pooled = match self.config.encoder {
            EncoderKind::MeanPool => {
                let (left, right): (Vec<Vec<usize>>, Vec<Vec<usize>>) = seqs.iter().map(|s| split_segments(s)).unzip();
                let a = g.gather_mean(embed, &left)?;
                let b = g.gather_mean(embed, &right)?;
                let ab = g.mul(a, b)?;
                let x = g.concat_cols(&[a, b, ab])?;
                let (w1, b1, w2, b2) = (g.param(ids.ff1), g.param(ids.ff1_b), g.param(ids.ff2), g.param(ids.ff2_b));
                let h = g.matmul(x, w1)?;
                let h = g.add(h, b1)?;
                let h = g.tanh(h);
                let h = g.matmul(h, w2)?;
                let h = g.add(h, b2)?;
                g.tanh(h)
            }
            EncoderKind::Attention => {
                let pos = g.param(ids.pos.expect("attention params"));
                let wq = g.param(ids.wq.expect("attention params"));
                let wk = g.param(ids.wk.expect("attention params"));
                let wv = g.param(ids.wv.expect("attention params"));
                let wo = g.param(ids.wo.expect("attention params"));
                let (w1, b1, w2, b2) = (g.param(ids.ff1), g.param(ids.ff1_b), g.param(ids.ff2), g.param(ids.ff2_b));
                let inv_sqrt_d = 1.0 / (self.config.dim as f64).sqrt();
                let mut rows = Vec::with_capacity(seqs.len());
                for seq in &seqs {
                    let positions: Vec<usize> = (0..seq.len()).collect();
                    let tok = g.gather(embed, seq)?;
                    let p = g.gather(pos, &positions)?;
                    let x = g.add(tok, p)?;
                    // Only the pooling row is read out, so only its query is formed.
                    let x0 = g.row(x, 0)?;
                    let q = g.matmul(x0, wq)?;
                    let k = g.matmul(x, wk)?;
                    let v = g.matmul(x, wv)?;
                    let s = g.matmul_t(q, k)?;
                    let s = g.scale(s, inv_sqrt_d);
                    let a = g.softmax_rows(s);
                    let ctx = g.matmul(a, v)?;
                    let o = g.matmul(ctx, wo)?;
                    let h = g.add(x0, o)?;
                    let f = g.matmul(h, w1)?;
                    let f = g.add(f, b1)?;
                    let f = g.relu(f);
                    let f = g.matmul(f, w2)?;
                    let f = g.add(f, b2)?;
                    let h = g.add(h, f)?;
                    rows.push(g.tanh(h));
                }
                g.concat_rows(&rows)?
            }
        };
        let (proj, proj_b) = (g.param(ids.proj), g.param(ids.proj_b));
        let s = g.matmul(pooled, proj)?;
        g.add(s, proj_b)
    }

    pub fn score_batch(&self, seqs: &[Vec<usize>]) -> Result<Vec<f64>> {
        if seqs.is_empty() {
            return Ok(Vec::new());
        }
        let mut g = Graph::new(&self.params);
        let out = self.forward(&mut g, seqs)?;
        Ok(g.value(out).data().to_vec())
    }

    pub fn score(&self, tokens: &[usize]) -> Result<f64> {
        Ok(self.score_batch(&[tokens.to_vec()])?[0])
    }

    /// Index of the embedding table in [`Self::params`].
    pub fn embedding_param(&self) -> ParamId {
        self.ids.embed
    }

    pub fn embedding(&self) -> &Tensor {
        self.params.get(self.ids.embed)
    }
}
