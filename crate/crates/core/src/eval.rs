//! Answer F1, exact match, per-level reports, the ranker-versus-generator
//! comparison matrix and EXEC/VALID@k over decoded beams.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::{Example, Level};
use crate::kb::KnowledgeBase;
use crate::pipeline::Prediction;
use crate::sexpr::{execute, parse_with, semantically_equal, Denotation, SExpr};
use crate::{Error, Result};

pub const DEFAULT_KS: [usize; 4] = [1, 3, 5, 10];

/// Set F1 over answer strings. Two empty sets score 1.
pub fn f1_strings<S: AsRef<str>>(pred: &[S], gold: &[S]) -> f64 {
    let p: BTreeSet<&str> = pred.iter().map(AsRef::as_ref).collect();
    let g: BTreeSet<&str> = gold.iter().map(AsRef::as_ref).collect();
    match (p.is_empty(), g.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let hit = p.intersection(&g).count() as f64;
    if hit == 0.0 {
        return 0.0;
    }
    let (precision, recall) = (hit / p.len() as f64, hit / g.len() as f64);
    2.0 * precision * recall / (precision + recall)
}

/// F1 over canonical answer strings; a count is a one-element set.
pub fn answer_f1(pred: &Denotation, gold: &Denotation) -> f64 {
    f1_strings(&pred.answer_strings(), &gold.answer_strings())
}

pub fn exact_match(pred: &SExpr, gold: &SExpr) -> bool {
    semantically_equal(pred, gold)
}

/// Fractions of questions where the two systems reach an equal non-zero F1,
/// the generator is better, the ranker is better, or both score zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonMatrix {
    pub equal_nonzero: f64,
    pub generator_better: f64,
    pub ranker_better: f64,
    pub both_zero: f64,
}

impl ComparisonMatrix {
    pub fn sum(&self) -> f64 {
        self.equal_nonzero + self.generator_better + self.ranker_better + self.both_zero
    }
}

/// Matrix from per-question F1 scores of the ranker and the generator.
pub fn comparison_matrix_f1(rank: &[f64], generator: &[f64]) -> Result<ComparisonMatrix> {
    if rank.len() != generator.len() {
        return Err(Error::Invalid(format!("comparison needs aligned lists, got {} and {}", rank.len(), generator.len())));
    }
    let mut counts = [0usize; 4];
    for (&r, &g) in rank.iter().zip(generator) {
        let i = if r == 0.0 && g == 0.0 {
            3
        } else if g > r {
            1
        } else if r > g {
            2
        } else {
            0
        };
        counts[i] += 1;
    }
    if rank.is_empty() {
        return Ok(ComparisonMatrix::default());
    }
    let n = rank.len() as f64;
    Ok(ComparisonMatrix {
        equal_nonzero: counts[0] as f64 / n,
        generator_better: counts[1] as f64 / n,
        ranker_better: counts[2] as f64 / n,
        both_zero: counts[3] as f64 / n,
    })
}

pub fn comparison_matrix(rank_preds: &[Prediction], gen_preds: &[Prediction], golds: &[Example]) -> Result<ComparisonMatrix> {
    if rank_preds.len() != golds.len() || gen_preds.len() != golds.len() {
        return Err(Error::Invalid(format!(
            "comparison needs aligned lists, got {} ranker, {} generator and {} gold",
            rank_preds.len(),
            gen_preds.len(),
            golds.len()
        )));
    }
    let rank: Vec<f64> = rank_preds.iter().zip(golds).map(|(p, g)| f1_strings(&p.answers, &g.answers)).collect();
    let generated: Vec<f64> = gen_preds.iter().zip(golds).map(|(p, g)| f1_strings(&p.answers, &g.answers)).collect();
    comparison_matrix_f1(&rank, &generated)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecValidTable {
    pub ks: Vec<usize>,
    pub exec: Vec<f64>,
    pub valid: Vec<f64>,
}

impl ExecValidTable {
    pub fn exec_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.exec[i])
    }

    pub fn valid_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.valid[i])
    }
}

/// For each question's decoded beams (best first): EXEC@k is the fraction
/// with a form among the top k that parses and executes, VALID@k the
/// fraction where such a form has a non-empty answer.
pub fn exec_valid_at_k<S: AsRef<str>>(beam_lists: &[Vec<S>], kb: &KnowledgeBase, ks: &[usize]) -> ExecValidTable {
    // Position of the first executable and first valid beam per question.
    let firsts: Vec<(Option<usize>, Option<usize>)> = beam_lists
        .iter()
        .map(|beams| {
            let mut first_exec = None;
            let mut first_valid = None;
            for (i, text) in beams.iter().enumerate() {
                let Some(d) = parse_with(text.as_ref(), kb).ok().and_then(|e| execute(&e, kb).ok()) else { continue };
                first_exec.get_or_insert(i);
                if !d.is_empty() {
                    first_valid = Some(i);
                    break;
                }
            }
            (first_exec, first_valid)
        })
        .collect();
    let n = beam_lists.len().max(1) as f64;
    let rate = |pick: &dyn Fn(&(Option<usize>, Option<usize>)) -> Option<usize>, k: usize| {
        firsts.iter().filter(|f| pick(f).is_some_and(|i| i < k)).count() as f64 / n
    };
    ExecValidTable {
        ks: ks.to_vec(),
        exec: ks.iter().map(|&k| rate(&|f| f.0, k)).collect(),
        valid: ks.iter().map(|&k| rate(&|f| f.1, k)).collect(),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub count: usize,
    pub em: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub notes: Vec<String>,
    pub overall: Scores,
    pub levels: Vec<(Level, Scores)>,
    pub exec_valid: ExecValidTable,
    /// Present when a second prediction file is compared.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<Comparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// Second file's overall scores.
    pub other: Scores,
    pub other_levels: Vec<(Level, Scores)>,
    /// Second minus first, overall.
    pub delta_em: f64,
    pub delta_f1: f64,
    /// First file as the ranker side, second as the generator side.
    pub matrix: ComparisonMatrix,
}

/// Per-question EM and F1 for predictions aligned to `golds` by id; a
/// missing prediction scores zero.
pub fn score_predictions(preds: &[Prediction], golds: &[Example], kb: &KnowledgeBase) -> Result<Vec<(f64, f64)>> {
    let by_id: HashMap<&str, &Prediction> = preds.iter().map(|p| (p.id.as_str(), p)).collect();
    golds
        .iter()
        .map(|g| {
            let gold_expr = g.gold_expr(kb)?;
            Ok(match by_id.get(g.id.as_str()) {
                None => (0.0, 0.0),
                Some(p) => {
                    let em = p
                        .s_expression
                        .as_deref()
                        .and_then(|s| parse_with(s, kb).ok())
                        .is_some_and(|e| exact_match(&e, &gold_expr));
                    (if em { 1.0 } else { 0.0 }, f1_strings(&p.answers, &g.answers))
                }
            })
        })
        .collect()
}

fn aggregate(scores: &[(f64, f64)], golds: &[Example]) -> (Scores, Vec<(Level, Scores)>) {
    let mean = |items: Vec<(f64, f64)>| {
        let n = items.len();
        let d = n.max(1) as f64;
        Scores { count: n, em: items.iter().map(|s| s.0).sum::<f64>() / d, f1: items.iter().map(|s| s.1).sum::<f64>() / d }
    };
    let overall = mean(scores.to_vec());
    let levels = Level::ALL
        .iter()
        .map(|&l| (l, mean(scores.iter().zip(golds).filter(|(_, g)| g.level == l).map(|(s, _)| *s).collect())))
        .collect();
    (overall, levels)
}

pub fn evaluate(preds: &[Prediction], golds: &[Example], kb: &KnowledgeBase, other: Option<&[Prediction]>) -> Result<EvalReport> {
    let scores = score_predictions(preds, golds, kb)?;
    let (overall, levels) = aggregate(&scores, golds);
    let beam_lists: Vec<Vec<&str>> = preds.iter().map(|p| p.diagnostics.beams.iter().map(String::as_str).collect()).collect();
    let comparison = match other {
        None => None,
        Some(other) => {
            let other_scores = score_predictions(other, golds, kb)?;
            let (o, ol) = aggregate(&other_scores, golds);
            let rank: Vec<f64> = scores.iter().map(|s| s.1).collect();
            let generated: Vec<f64> = other_scores.iter().map(|s| s.1).collect();
            Some(Comparison {
                other: o,
                other_levels: ol,
                delta_em: o.em - overall.em,
                delta_f1: o.f1 - overall.f1,
                matrix: comparison_matrix_f1(&rank, &generated)?,
            })
        }
    };
    Ok(EvalReport {
        notes: vec![
            "EM is semantic equality of logical forms (AND operands unordered)".into(),
            "F1 of two empty answer sets is 1.0".into(),
            "hits@1: n/a (answers are sets)".into(),
        ],
        overall,
        levels,
        exec_valid: exec_valid_at_k(&beam_lists, kb, &DEFAULT_KS),
        comparison,
    })
}

impl EvalReport {
    /// Plain-text tables: EM/F1 by level, then EXEC/VALID by k.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        for note in &self.notes {
            let _ = writeln!(s, "# {note}");
        }
        let mut header = format!("{:<12}", "system");
        for (l, _) in &self.levels {
            let _ = write!(header, " {:>14}", l.name());
        }
        let _ = write!(header, " {:>14}", "overall");
        let _ = writeln!(s, "{header}");
        let _ = writeln!(s, "{:<12}{}", "", format!(" {:>6} {:>7}", "EM", "F1").repeat(self.levels.len() + 1));
        let row = |name: &str, levels: &[(Level, Scores)], overall: &Scores| {
            let mut r = format!("{name:<12}");
            for sc in levels.iter().map(|(_, s)| s).chain(std::iter::once(overall)) {
                let _ = write!(r, " {:>6.1} {:>7.1}", 100.0 * sc.em, 100.0 * sc.f1);
            }
            r
        };
        let _ = writeln!(s, "{}", row("pred", &self.levels, &self.overall));
        if let Some(c) = &self.comparison {
            let _ = writeln!(s, "{}", row("pred2", &c.other_levels, &c.other));
            let _ = writeln!(s, "delta (pred2 - pred): EM {:+.1} F1 {:+.1}", 100.0 * c.delta_em, 100.0 * c.delta_f1);
            let m = &c.matrix;
            let _ = writeln!(
                s,
                "matrix: equal-nonzero {:.3} pred2-better {:.3} pred-better {:.3} both-zero {:.3}",
                m.equal_nonzero, m.generator_better, m.ranker_better, m.both_zero
            );
        }
        let _ = writeln!(s);
        let mut k_header = format!("{:<6}", "k");
        let mut exec = format!("{:<6}", "EXEC");
        let mut valid = format!("{:<6}", "VALID");
        for (i, k) in self.exec_valid.ks.iter().enumerate() {
            let _ = write!(k_header, " {k:>6}");
            let _ = write!(exec, " {:>6.1}", 100.0 * self.exec_valid.exec[i]);
            let _ = write!(valid, " {:>6.1}", 100.0 * self.exec_valid.valid[i]);
        }
        let _ = writeln!(s, "{k_header}\n{exec}\n{valid}");
        s
    }
}
