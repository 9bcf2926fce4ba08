//! Finite-difference gradient checks shared by the gradient tests.
#![allow(dead_code)]

use kbqa_neural::{
    EncoderDecoder, EncoderKind, EncoderScorer, Graph, NodeId, ParamId, ParamStore, ScorerConfig, Seq2SeqConfig,
    Tensor, Vocabulary,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;

fn loss_value(store: &ParamStore, build: &dyn Fn(&mut Graph) -> NodeId) -> f64 {
    let mut g = Graph::new(store);
    let l = build(&mut g);
    g.value(l).item()
}

/// Checks `probes` random coordinates; returns the worst relative error or
/// the first coordinate over tolerance.
pub fn check(
    store: &mut ParamStore,
    probes: usize,
    seed: u64,
    build: &dyn Fn(&mut Graph) -> NodeId,
) -> Result<f64, String> {
    let grads = {
        let mut g = Graph::new(store);
        let l = build(&mut g);
        g.backward(l).unwrap()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<ParamId> = store.ids().collect();
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let pid = ids[rng.gen_range(0..ids.len())];
        let n = store.get(pid).len();
        let j = rng.gen_range(0..n);
        let analytic = grads.get(pid).map_or(0.0, |g| g[j]);
        let orig = store.get(pid).data()[j];
        store.get_mut(pid).data_mut()[j] = orig + EPS;
        let up = loss_value(store, build);
        store.get_mut(pid).data_mut()[j] = orig - EPS;
        let down = loss_value(store, build);
        store.get_mut(pid).data_mut()[j] = orig;
        let numeric = (up - down) / (2.0 * EPS);
        let scale = analytic.abs().max(numeric.abs());
        let err = if scale < 1e-7 { 0.0 } else { (analytic - numeric).abs() / scale };
        if err >= REL_TOL {
            return Err(format!("{}[{j}]: analytic {analytic} numeric {numeric} (rel {err:.2e})", store.name(pid)));
        }
        worst = worst.max(err);
    }
    Ok(worst)
}

pub fn random_store(rng: &mut ChaCha8Rng, shapes: &[(&str, usize, usize)]) -> (ParamStore, Vec<ParamId>) {
    let mut s = ParamStore::new();
    let ids = shapes.iter().map(|(n, r, c)| s.add_uniform(n, *r, *c, 1.0, rng)).collect();
    (s, ids)
}

/// Fixed random weights turn any tensor into a scalar with dense gradients.
pub fn weigh(g: &mut Graph, x: NodeId, seed: u64) -> NodeId {
    let t = g.value(x).clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..t.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let w = g.input(Tensor::matrix(t.rows(), t.cols(), w));
    let p = g.mul(x, w).unwrap();
    g.sum(p)
}

pub type OpCase = (&'static str, &'static [(&'static str, usize, usize)], fn(&mut Graph, &[NodeId]) -> NodeId);

pub fn op_cases() -> Vec<OpCase> {
    vec![
        ("matmul", &[("a", 3, 4), ("b", 4, 2)], |g, p| g.matmul(p[0], p[1]).unwrap()),
        ("matmul_t", &[("a", 3, 4), ("b", 5, 4)], |g, p| g.matmul_t(p[0], p[1]).unwrap()),
        ("add", &[("a", 3, 4), ("b", 3, 4)], |g, p| g.add(p[0], p[1]).unwrap()),
        ("add_broadcast", &[("a", 3, 4), ("b", 1, 4)], |g, p| g.add(p[0], p[1]).unwrap()),
        ("sub_broadcast", &[("a", 3, 4), ("b", 1, 4)], |g, p| g.sub(p[0], p[1]).unwrap()),
        ("mul", &[("a", 3, 4), ("b", 3, 4)], |g, p| g.mul(p[0], p[1]).unwrap()),
        ("mul_broadcast", &[("a", 3, 4), ("b", 1, 4)], |g, p| g.mul(p[0], p[1]).unwrap()),
        ("scale", &[("a", 2, 3)], |g, p| g.scale(p[0], -1.7)),
        ("add_const", &[("a", 2, 3)], |g, p| g.add_const(p[0], 0.3)),
        ("tanh", &[("a", 3, 3)], |g, p| g.tanh(p[0])),
        ("sigmoid", &[("a", 3, 3)], |g, p| g.sigmoid(p[0])),
        ("relu", &[("a", 4, 4)], |g, p| g.relu(p[0])),
        ("gather", &[("t", 5, 3)], |g, p| g.gather(p[0], &[4, 0, 4, 2]).unwrap()),
        ("gather_mean", &[("t", 5, 3)], |g, p| g.gather_mean(p[0], &[vec![0, 1, 1], vec![3], vec![2, 4]]).unwrap()),
        ("mean_rows", &[("a", 4, 3)], |g, p| g.mean_rows(p[0])),
        ("row", &[("a", 4, 3)], |g, p| g.row(p[0], 2).unwrap()),
        ("slice_cols", &[("a", 3, 6)], |g, p| g.slice_cols(p[0], 2, 3).unwrap()),
        ("concat_cols", &[("a", 2, 3), ("b", 2, 2)], |g, p| g.concat_cols(&[p[0], p[1], p[0]]).unwrap()),
        ("concat_rows", &[("a", 2, 3), ("b", 1, 3)], |g, p| g.concat_rows(&[p[0], p[1]]).unwrap()),
        ("transpose", &[("a", 2, 5)], |g, p| g.transpose(p[0])),
        ("softmax_rows", &[("a", 3, 5)], |g, p| g.softmax_rows(p[0])),
        ("log_softmax_rows", &[("a", 3, 5)], |g, p| g.log_softmax_rows(p[0])),
        ("pick", &[("a", 3, 4)], |g, p| g.pick(p[0], &[(0, 1), (2, 3), (0, 1)]).unwrap()),
        ("sum", &[("a", 3, 4)], |g, p| g.sum(p[0])),
        ("mean", &[("a", 3, 4)], |g, p| g.mean(p[0])),
    ]
}

/// Checks one op on random inputs, reduced to a scalar by fixed weights.
pub fn check_op(index: usize, shapes: &[(&str, usize, usize)], op: fn(&mut Graph, &[NodeId]) -> NodeId) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(100 + index as u64);
    let (mut store, ids) = random_store(&mut rng, shapes);
    let build = |g: &mut Graph| {
        let nodes: Vec<NodeId> = ids.iter().map(|&id| g.param(id)).collect();
        let out = op(g, &nodes);
        weigh(g, out, 7)
    };
    check(&mut store, PROBES, index as u64, &build)
}

pub const PROBES: usize = 30;

pub fn toy_vocab(n: usize) -> Vocabulary {
    Vocabulary::from_tokens((0..n).map(|i| format!("w{i}")))
}

pub fn check_scorer(encoder: EncoderKind) -> Result<f64, String> {
    let cfg = ScorerConfig { encoder, dim: 6, hidden: 5, max_len: 16 };
    let m = EncoderScorer::new(cfg, toy_vocab(8), 21);
    let seqs = vec![vec![6, 7, 4, 9], vec![10, 4, 11, 12, 6], vec![13]];
    // The model reads parameters through the graph, so perturbing the
    // cloned store is enough.
    let mut store = m.params.clone();
    check(&mut store, PROBES, 5, &|g: &mut Graph| {
        let s = m.forward(g, &seqs).unwrap();
        weigh(g, s, 3)
    })
}

pub fn check_seq2seq(encoder: EncoderKind) -> Result<f64, String> {
    let cfg = Seq2SeqConfig { dim: 6, hidden: 5, encoder, max_src_len: 32, max_tgt_len: 16 };
    let m = EncoderDecoder::new(cfg, toy_vocab(7), 8);
    let batch = vec![(vec![6, 7, 8, 4, 9], vec![9, 10]), (vec![11, 12], vec![6, 6, 12])];
    let mut store = m.params.clone();
    check(&mut store, PROBES, 9, &|g: &mut Graph| m.batch_loss(g, &batch).unwrap())
}
