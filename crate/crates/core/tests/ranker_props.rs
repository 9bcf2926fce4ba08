#[path = "../../neural/tests/common/mod.rs"]
mod gradcheck;

use kbqa_core::datagen::{generate_corpus, SchemaSpec};
use kbqa_core::enumerate::{Candidate, EnumConfig};
use kbqa_core::ranker::{
    hits_at_k, listwise_loss, prepare_examples, rank, ranker_loss, sample_negatives, train_ranker, NegativeMode,
    RankedList, Ranker, RankerConfig, RankerExample,
};
use kbqa_core::sexpr::{Denotation, RelationExpr, SExpr};
use kbqa_core::text::{build_vocabulary, Slots};
use kbqa_neural::{EncoderKind, EncoderScorer, Graph, ScorerConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn scores_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-30.0f64..30.0, 1..40)
}

proptest! {
    #[test]
    fn loss_is_shift_invariant(scores in scores_strategy(), c in -100.0f64..100.0) {
        let shifted: Vec<f64> = scores.iter().map(|s| s + c).collect();
        let (a, b) = (ranker_loss(&scores).unwrap(), ranker_loss(&shifted).unwrap());
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{} vs {}", a, b);
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn loss_falls_as_the_gold_score_rises(scores in scores_strategy(), bump in 1e-3f64..5.0) {
        prop_assume!(scores.len() > 1);
        let mut up = scores.clone();
        up[0] += bump;
        let (before, after) = (ranker_loss(&scores).unwrap(), ranker_loss(&up).unwrap());
        prop_assert!(after <= before);
        // Below this the loss is ln(1 + tiny) and rounds flat.
        if before > 1e-9 {
            prop_assert!(after < before, "{} -> {}", before, after);
        }
    }

    #[test]
    fn ranking_is_invariant_under_increasing_maps(raw in prop::collection::vec(0u8..6, 1..30)) {
        let pool: Vec<Candidate> = (0..raw.len())
            .map(|i| Candidate::enumerated(SExpr::entity(&format!("m.{i:03}")), Denotation::empty()))
            .collect();
        let scores: Vec<f64> = raw.iter().map(|&r| r as f64 / 2.0).collect();
        let mapped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
        let a = RankedList::from_scores(pool.clone(), &scores);
        let b = RankedList::from_scores(pool, &mapped);
        let order = |l: &RankedList| l.items.iter().map(|c| c.expr.print()).collect::<Vec<_>>();
        prop_assert_eq!(order(&a), order(&b));
        prop_assert!(a.items.windows(2).all(|w| w[0].score > w[1].score || (w[0].score == w[1].score && w[0].expr.print() < w[1].expr.print())));
    }

    #[test]
    fn bootstrap_keeps_the_top_wrong_candidate(
        scores in prop::collection::vec(-10.0f64..10.0, 2..200),
        gold_seed in any::<usize>(),
        n in 1usize..100,
        seed in any::<u64>(),
    ) {
        let gold = gold_seed % scores.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let negs = sample_negatives(scores.len(), Some(gold), Some(&scores), n, NegativeMode::Bootstrap, &mut rng);
        let top = (0..scores.len()).filter(|&i| i != gold).max_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(b.cmp(&a))).unwrap();
        prop_assert!(negs.contains(&top));
        prop_assert_eq!(negs.len(), n.min(scores.len() - 1));
        prop_assert!(!negs.contains(&gold));
        let mut dedup = negs.clone();
        dedup.sort_unstable();
        dedup.dedup();
        prop_assert_eq!(dedup.len(), negs.len());
    }

    #[test]
    fn random_negatives_are_distinct_and_exclude_gold(pool in 1usize..300, gold_seed in any::<usize>(), n in 0usize..120, seed in any::<u64>()) {
        let gold = gold_seed % pool;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let negs = sample_negatives(pool, Some(gold), None, n, NegativeMode::Random, &mut rng);
        prop_assert_eq!(negs.len(), n.min(pool - 1));
        prop_assert!(negs.iter().all(|&i| i != gold && i < pool));
        let mut dedup = negs.clone();
        dedup.sort_unstable();
        dedup.dedup();
        prop_assert_eq!(dedup.len(), negs.len());
    }
}

#[test]
fn random_sampling_is_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut counts = [0usize; 10];
    for _ in 0..10_000 {
        for i in sample_negatives(11, Some(10), None, 2, NegativeMode::Random, &mut rng) {
            counts[i] += 1;
        }
    }
    println!("{counts:?}");
    assert!(counts.iter().all(|&c| (1850..=2150).contains(&c)), "{counts:?}");
}

#[test]
fn full_ranker_loss_matches_finite_differences() {
    for encoder in [EncoderKind::MeanPool, EncoderKind::Attention] {
        let cfg = ScorerConfig { encoder, dim: 6, hidden: 5, max_len: 16 };
        let m = EncoderScorer::new(cfg, gradcheck::toy_vocab(8), 4);
        // Gold first, then negatives sharing the question prefix.
        let list = vec![vec![6, 7, 4, 9, 10], vec![6, 7, 4, 11], vec![6, 7, 4, 12, 9, 13], vec![6, 7, 4, 8]];
        let mut store = m.params.clone();
        let worst = gradcheck::check(&mut store, 40, 3, &|g: &mut Graph| {
            let s = m.forward(g, &list).unwrap();
            listwise_loss(g, s).unwrap()
        })
        .unwrap();
        println!("{encoder:?} ranker loss worst {worst:.2e}");
        let mut g = Graph::new(&m.params);
        let s = m.forward(&mut g, &list).unwrap();
        let l = listwise_loss(&mut g, s).unwrap();
        let direct = ranker_loss(g.value(s).data()).unwrap();
        assert!((g.value(l).item() - direct).abs() < 1e-12);
    }
}

#[test]
fn empty_pool_ranks_to_an_empty_list() {
    let m = Ranker::new(ScorerConfig::default(), gradcheck::toy_vocab(3), 0);
    let ranked = rank(&m, &["who".to_string()], &Slots::default(), Vec::new()).unwrap();
    assert!(ranked.is_empty());
}

#[test]
fn identical_forms_tie_and_order_by_print() {
    let rel = RelationExpr::forward("a.b".into());
    let a = SExpr::and(SExpr::class("x.y"), SExpr::join(rel.clone(), SExpr::entity("m.1")));
    let b = SExpr::and(SExpr::join(rel, SExpr::entity("m.1")), SExpr::class("x.y"));
    let pool = vec![Candidate::enumerated(b, Denotation::empty()), Candidate::enumerated(a, Denotation::empty())];
    let zero = Ranker { scorer: EncoderScorer::zeroed(ScorerConfig::default(), gradcheck::toy_vocab(3)) };
    let ranked = rank(&zero, &[], &Slots::default(), pool).unwrap();
    assert_eq!(ranked.items[0].score, ranked.items[1].score);
    let printed: Vec<String> = ranked.items.iter().map(|c| c.expr.print()).collect();
    let mut sorted = printed.clone();
    sorted.sort();
    assert_eq!(printed, sorted);
}

/// Pilot: lr 5e-3 with two questions per step reached mean hit@1 0.91 over
/// corpora 0..3 and 0.83 over corpora 9..12; 8 per step at 2e-3 stayed
/// under 0.5 after 20 epochs.
fn small_spec() -> SchemaSpec {
    SchemaSpec {
        domains: 1,
        classes_per_domain: 3,
        relations_per_class: 2,
        numeric_per_class: 1,
        entities_per_class: 30,
        attribute_words: 6,
        ambiguity_rate: 0.0,
        train: 50,
        dev: 10,
        test: 40,
        test_mix: [1.0, 0.0, 0.0],
        ..SchemaSpec::default()
    }
}

fn small_config() -> RankerConfig {
    RankerConfig {
        epochs: 20,
        lr: 5e-3,
        questions_per_step: 2,
        scorer: ScorerConfig { dim: 32, hidden: 64, ..Default::default() },
        ..Default::default()
    }
}

fn small_examples(seed: u64) -> (Vec<RankerExample>, Vec<RankerExample>, kbqa_neural::Vocabulary) {
    let corpus = generate_corpus(&small_spec(), seed).unwrap();
    let train = prepare_examples(&corpus.train, &corpus.kb, &EnumConfig::default()).unwrap();
    let test = prepare_examples(&corpus.test, &corpus.kb, &EnumConfig::default()).unwrap();
    let vocab = build_vocabulary(&corpus.kb, train.iter().map(|e| e.tokens.as_slice()));
    (train, test, vocab)
}

#[test]
fn small_corpus_ranker_generalizes() {
    let mut total = 0.0;
    for seed in 0..3 {
        let (train, test, vocab) = small_examples(seed);
        assert_eq!(train.len(), 50);
        let (ranker, report) = train_ranker(&train, vocab, &small_config(), 1).unwrap();
        let hits = hits_at_k(&ranker, &test, &[1, 5]).unwrap();
        println!("corpus {seed}: hits {:?} over {} covered", hits.hits, hits.covered);
        assert!(report.epoch_losses.last() < report.epoch_losses.first());
        total += hits.at(1);
    }
    assert!(total / 3.0 >= 0.8, "mean hit@1 {}", total / 3.0);
}

#[test]
fn training_is_reproducible_bit_for_bit() {
    let (train, _, vocab) = small_examples(0);
    let cfg = RankerConfig { epochs: 3, ..small_config() };
    let (a, ra) = train_ranker(&train, vocab.clone(), &cfg, 5).unwrap();
    let (b, rb) = train_ranker(&train, vocab, &cfg, 5).unwrap();
    assert_eq!(ra, rb);
    for (x, y) in a.scorer.params.iter().zip(b.scorer.params.iter()) {
        assert!(x.tensor.data().iter().zip(y.tensor.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}

#[test]
fn single_candidate_pools_have_zero_loss() {
    let (mut train, _, vocab) = small_examples(0);
    for ex in &mut train {
        if let Some(g) = ex.gold {
            ex.pool = vec![ex.pool[g].clone()];
            ex.gold = Some(0);
        }
    }
    let (_, report) = train_ranker(&train, vocab, &RankerConfig { epochs: 2, ..small_config() }, 0).unwrap();
    assert!(report.epoch_losses.iter().all(|&l| l == 0.0));
}

#[test]
fn empty_training_set_is_an_error() {
    assert!(train_ranker(&[], gradcheck::toy_vocab(3), &RankerConfig::default(), 0).is_err());
}
