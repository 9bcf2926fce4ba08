use kbqa_neural::{
    beam_search, greedy, log_softmax, Adam, AdamConfig, EncoderDecoder, EncoderKind, Graph, Hypothesis, ParamStore,
    Seq2SeqConfig, StepModel, Tensor, Vocabulary,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Next-token distribution is a fixed random function of the whole prefix.
struct PrefixModel {
    vocab: usize,
    seed: u64,
}

impl PrefixModel {
    fn dist(&self, prefix: &[usize]) -> Vec<f64> {
        let mut h = self.seed;
        for &t in prefix {
            h = h.wrapping_mul(6364136223846793005).wrapping_add(t as u64 + 1);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        let logits: Vec<f64> = (0..self.vocab).map(|_| rng.gen_range(-2.0..2.0)).collect();
        log_softmax(&logits)
    }
}

impl StepModel for PrefixModel {
    type State = Vec<usize>;
    fn initial(&mut self) -> (Vec<usize>, Vec<f64>) {
        (Vec::new(), self.dist(&[]))
    }
    fn advance(&mut self, state: &Vec<usize>, token: usize) -> (Vec<usize>, Vec<f64>) {
        let mut s = state.clone();
        s.push(token);
        let d = self.dist(&s);
        (s, d)
    }
    fn eos(&self) -> usize {
        0
    }
}

/// Every completed sequence of at most `max_len` steps, by brute force.
fn enumerate_all(m: &PrefixModel, max_len: usize) -> Vec<Hypothesis> {
    let mut out = Vec::new();
    let mut frontier: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), 0.0)];
    for step in 0..max_len {
        let mut next = Vec::new();
        for (prefix, lp) in &frontier {
            let d = m.dist(prefix);
            for (t, l) in d.iter().enumerate() {
                if t == 0 {
                    out.push(Hypothesis { tokens: prefix.clone(), log_prob: lp + l, finished: true });
                } else {
                    let mut p = prefix.clone();
                    p.push(t);
                    if step + 1 == max_len {
                        out.push(Hypothesis { tokens: p, log_prob: lp + l, finished: false });
                    } else {
                        next.push((p, lp + l));
                    }
                }
            }
        }
        frontier = next;
    }
    out.sort_by(|a, b| b.log_prob.total_cmp(&a.log_prob).then_with(|| a.tokens.cmp(&b.tokens)));
    out
}

#[test]
fn wide_beam_equals_exhaustive_enumeration() {
    let mut m = PrefixModel { vocab: 5, seed: 17 };
    let expected = enumerate_all(&m, 3);
    assert_eq!(expected.len(), 1 + 4 + 16 + 64);
    let got = beam_search(&mut m, 125, 3);
    assert_eq!(got.len(), expected.len());
    for (g, e) in got.iter().zip(&expected) {
        assert_eq!(g.tokens, e.tokens);
        assert_eq!(g.finished, e.finished);
        assert!((g.log_prob - e.log_prob).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn beam_properties_on_toy_models(seed in 0u64..10_000, beam in 1usize..12, max_len in 1usize..5) {
        let mut m = PrefixModel { vocab: 5, seed };
        let out = beam_search(&mut m, beam, max_len);
        let g = greedy(&mut m, max_len);
        prop_assert!(!out.is_empty() && out.len() <= beam);
        for w in out.windows(2) {
            prop_assert!(w[0].log_prob >= w[1].log_prob);
        }
        prop_assert!(out[0].log_prob >= g.log_prob - 1e-12);
        if beam == 1 {
            prop_assert_eq!(&out[0], &g);
        }
        // Every returned score is the true sequence log-probability.
        let all = enumerate_all(&m, max_len);
        for h in &out {
            let truth = all.iter().find(|e| e.tokens == h.tokens && e.finished == h.finished).unwrap();
            prop_assert!((truth.log_prob - h.log_prob).abs() < 1e-12);
        }
        // A wider beam never returns a worse best hypothesis than greedy,
        // and never drops below the narrower beam's greedy guarantee.
        let wider = beam_search(&mut m, beam + 3, max_len);
        prop_assert!(wider[0].log_prob >= g.log_prob - 1e-12);
    }

    #[test]
    fn softmax_rows_are_distributions(xs in prop::collection::vec(-500.0f64..500.0, 1..20)) {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let n = xs.len();
        let x = g.input(Tensor::matrix(1, n, xs));
        let p = g.softmax_rows(x);
        let v = g.value(p).data();
        prop_assert!(v.iter().all(|&q| q >= 0.0));
        prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let lp = g.log_softmax_rows(x);
        prop_assert!(g.value(lp).data().iter().all(|l| l.is_finite() && *l <= 0.0));
    }
}

#[test]
fn adam_matches_hand_computed_updates() {
    let mut store = ParamStore::new();
    let x = store.add("x", Tensor::scalar(1.0));
    let mut opt = Adam::new(&store, AdamConfig { clip_norm: None, ..Default::default() });
    let expected = [0.900000002, 0.8654394181165108, 0.8275002408356956];
    for (g, want) in [0.5, -0.2, 0.1].into_iter().zip(expected) {
        store.get_mut(x).accumulate_grad(&[g]).unwrap();
        opt.step(&mut store, 0.1).unwrap();
        assert!((store.get(x).item() - want).abs() < 1e-15, "{} vs {want}", store.get(x).item());
    }
    assert_eq!(opt.steps(), 3);
}

#[test]
fn adam_with_zero_gradients_leaves_params_unchanged() {
    let mut store = ParamStore::new();
    let x = store.add("x", Tensor::row(vec![1.5, -2.0]));
    let mut opt = Adam::new(&store, AdamConfig::default());
    opt.step(&mut store, 0.1).unwrap();
    assert_eq!(store.get(x).data(), &[1.5, -2.0]);
    assert_eq!(opt.steps(), 1);
}

#[test]
fn adam_rejects_mismatched_store() {
    let mut store = ParamStore::new();
    store.add("x", Tensor::scalar(1.0));
    let mut opt = Adam::new(&store, AdamConfig::default());
    store.add("y", Tensor::scalar(1.0));
    assert!(opt.step(&mut store, 0.1).is_err());
}

#[test]
fn adam_descends_a_quadratic() {
    let mut store = ParamStore::new();
    let x = store.add("x", Tensor::scalar(4.0));
    let mut opt = Adam::new(&store, AdamConfig { clip_norm: None, ..Default::default() });
    let mut prev = f64::INFINITY;
    for _ in 0..100 {
        let v = store.get(x).item();
        let loss = (v - 1.0).powi(2);
        assert!(loss < prev, "loss {loss} did not decrease from {prev}");
        prev = loss;
        store.get_mut(x).accumulate_grad(&[2.0 * (v - 1.0)]).unwrap();
        opt.step(&mut store, 0.01).unwrap();
    }
}

fn copy_vocab() -> Vocabulary {
    Vocabulary::from_tokens(["a", "b", "c", "d"])
}

/// Trains a tiny model to copy its input, then checks the teacher-forced
/// loss identity and beam determinism on it.
#[test]
fn seq2seq_learns_to_copy_and_loss_is_mean_nll() {
    let vocab = copy_vocab();
    let cfg = Seq2SeqConfig { dim: 16, hidden: 32, encoder: EncoderKind::Attention, max_src_len: 16, max_tgt_len: 8 };
    let mut model = EncoderDecoder::new(cfg, vocab, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let data: Vec<(Vec<usize>, Vec<usize>)> = (0..40)
        .map(|_| {
            let n = rng.gen_range(1..4);
            let s: Vec<usize> = (0..n).map(|_| rng.gen_range(6..10)).collect();
            (s.clone(), s)
        })
        .collect();
    let mut opt = Adam::new(&model.params, AdamConfig::default());
    let mut first = None;
    let mut last = 0.0;
    for _ in 0..60 {
        for chunk in data.chunks(8) {
            let grads = {
                let mut g = Graph::new(&model.params);
                let l = model.batch_loss(&mut g, chunk).unwrap();
                last = g.value(l).item();
                first.get_or_insert(last);
                g.backward(l).unwrap()
            };
            model.params.accumulate(&grads).unwrap();
            opt.step(&mut model.params, 0.01).unwrap();
        }
    }
    assert!(last < first.unwrap() * 0.5, "loss {last} vs initial {first:?}");

    // Definition check: batch loss = total NLL of gold targets / positions.
    let batch = &data[..5];
    let mut g = Graph::new(&model.params);
    let l = model.batch_loss(&mut g, batch).unwrap();
    let total: f64 = batch.iter().map(|(s, t)| -model.sequence_log_prob(s, t).unwrap()).sum();
    let positions: usize = batch.iter().map(|(_, t)| t.len() + 1).sum();
    assert!((g.value(l).item() - total / positions as f64).abs() < 1e-12);

    let copied = data.iter().filter(|(s, t)| model.greedy(s, 8).unwrap().tokens == *t).count();
    assert!(copied >= 30, "copied {copied}/40");
    let a = model.beam_search(&data[0].0, 4, 8).unwrap();
    let b = model.beam_search(&data[0].0, 4, 8).unwrap();
    assert_eq!(a, b);
}
