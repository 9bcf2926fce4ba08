//! Beam search over any autoregressive model exposing next-token
//! log-distributions.

use std::cmp::Ordering;

/// An autoregressive decoder seen one step at a time.
pub trait StepModel {
    type State: Clone;

    /// State before any output token, with the log-distribution of the first token.
    fn initial(&mut self) -> (Self::State, Vec<f64>);

    /// Consumes `token` and returns the successor state and next log-distribution.
    fn advance(&mut self, state: &Self::State, token: usize) -> (Self::State, Vec<f64>);

    fn eos(&self) -> usize;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Output tokens, without the end marker.
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    /// Whether decoding stopped on the end marker rather than the length cap.
    pub finished: bool,
}

fn by_score(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.log_prob.total_cmp(&a.log_prob).then_with(|| a.tokens.cmp(&b.tokens))
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in xs.iter().enumerate() {
        if *v > xs[best] {
            best = i;
        }
    }
    best
}

/// Argmax rollout; `max_len` bounds the number of decoding steps (the end
/// marker counts as one).
pub fn greedy<M: StepModel>(model: &mut M, max_len: usize) -> Hypothesis {
    let (mut state, mut dist) = model.initial();
    let mut tokens = Vec::new();
    let mut log_prob = 0.0;
    for _ in 0..max_len {
        let t = argmax(&dist);
        log_prob += dist[t];
        if t == model.eos() {
            return Hypothesis { tokens, log_prob, finished: true };
        }
        tokens.push(t);
        if tokens.len() == max_len {
            break;
        }
        let (s, d) = model.advance(&state, t);
        state = s;
        dist = d;
    }
    Hypothesis { tokens, log_prob, finished: false }
}

/// Returns at most `beam` completed hypotheses sorted by log-probability
/// (descending, ties by token sequence).
///
/// Each step keeps the `beam` best expansions of the live hypotheses;
/// expansions ending in the end marker retire as finished. Search stops
/// when nothing is live, `max_len` steps have been taken, or no live
/// hypothesis can beat the `beam`-th finished one. The greedy rollout is
/// always added to the finished pool, so the best result is never worse
/// than greedy decoding.
pub fn beam_search<M: StepModel>(model: &mut M, beam: usize, max_len: usize) -> Vec<Hypothesis> {
    let beam = beam.max(1);
    if max_len == 0 {
        return vec![Hypothesis { tokens: Vec::new(), log_prob: 0.0, finished: false }];
    }
    let eos = model.eos();
    let (s0, d0) = model.initial();
    let mut live: Vec<(Vec<usize>, f64, M::State, Vec<f64>)> = vec![(Vec::new(), 0.0, s0, d0)];
    let mut finished: Vec<Hypothesis> = Vec::new();

    for step in 0..max_len {
        let mut expansions: Vec<(usize, usize, f64)> = Vec::new();
        for (h, (_, lp, _, dist)) in live.iter().enumerate() {
            for (t, l) in dist.iter().enumerate() {
                if l.is_finite() {
                    expansions.push((h, t, lp + l));
                }
            }
        }
        expansions.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
        expansions.truncate(beam);

        let last_step = step + 1 == max_len;
        let mut next = Vec::new();
        for (h, t, lp) in expansions {
            let mut tokens = live[h].0.clone();
            if t == eos {
                finished.push(Hypothesis { tokens, log_prob: lp, finished: true });
                continue;
            }
            tokens.push(t);
            if last_step {
                finished.push(Hypothesis { tokens, log_prob: lp, finished: false });
            } else {
                let (s, d) = model.advance(&live[h].2, t);
                next.push((tokens, lp, s, d));
            }
        }
        live = next;
        if live.is_empty() {
            break;
        }
        if finished.len() >= beam {
            finished.sort_by(by_score);
            let kth = finished[beam - 1].log_prob;
            if live.iter().all(|(_, lp, _, _)| *lp <= kth) {
                break;
            }
        }
    }

    let g = greedy(model, max_len);
    if !finished.iter().any(|h| h.tokens == g.tokens && h.finished == g.finished) {
        finished.push(g);
    }
    finished.sort_by(by_score);
    finished.truncate(beam);
    finished
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Distribution depends only on the previous token.
    struct Bigram {
        table: Vec<Vec<f64>>,
        start: Vec<f64>,
    }

    impl StepModel for Bigram {
        type State = usize;
        fn initial(&mut self) -> (usize, Vec<f64>) {
            (usize::MAX, self.start.clone())
        }
        fn advance(&mut self, _: &usize, token: usize) -> (usize, Vec<f64>) {
            (token, self.table[token].clone())
        }
        fn eos(&self) -> usize {
            0
        }
    }

    fn ln(p: &[f64]) -> Vec<f64> {
        p.iter().map(|x| x.ln()).collect()
    }

    #[test]
    fn certain_model_yields_its_sequence_at_zero_log_prob() {
        let mut m = Bigram {
            start: ln(&[0.0, 1.0, 0.0]),
            table: vec![ln(&[1.0, 0.0, 0.0]), ln(&[0.0, 0.0, 1.0]), ln(&[1.0, 0.0, 0.0])],
        };
        let out = beam_search(&mut m, 3, 10);
        assert_eq!(out[0].tokens, vec![1, 2]);
        assert_eq!(out[0].log_prob, 0.0);
        assert!(out[0].finished);
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn length_cap_closes_hypotheses() {
        let mut m = Bigram { start: ln(&[0.1, 0.9]), table: vec![ln(&[0.1, 0.9]); 2] };
        let out = beam_search(&mut m, 1, 3);
        assert_eq!(out[0].tokens, vec![1, 1, 1]);
        assert!(!out[0].finished);
    }

    #[test]
    fn beam_one_is_greedy() {
        let mut m = Bigram {
            start: ln(&[0.2, 0.5, 0.3]),
            table: vec![ln(&[0.4, 0.3, 0.3]), ln(&[0.5, 0.1, 0.4]), ln(&[0.3, 0.6, 0.1])],
        };
        let g = greedy(&mut m, 5);
        let b = beam_search(&mut m, 1, 5);
        assert_eq!(b, vec![g]);
    }
}
