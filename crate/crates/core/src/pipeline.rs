//! End-to-end inference: link, enumerate, rank, generate, then execute the
//! generated forms in beam order with the ranker's best candidate as the
//! fallback.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::Example;
use crate::enumerate::{enumerate_candidates, EnumConfig};
use crate::generator::{GeneratedBeam, Generator};
use crate::kb::{EntityId, KnowledgeBase};
use crate::linker::{link, linked_spans, Disambiguator};
use crate::ranker::{rank, CandidateScorer, RandomScorer, RankedList, Ranker};
use crate::sexpr::{check, execute, Denotation, SExpr};
use crate::text::slot_question;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    /// Ranker plus generator.
    Full,
    /// Top-ranked candidate only.
    RankOnly,
    /// Generator conditioned on randomly ordered candidates.
    GenOnly,
}

impl Ablation {
    pub const ALL: [Ablation; 3] = [Ablation::Full, Ablation::RankOnly, Ablation::GenOnly];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::RankOnly => "rank-only",
            Ablation::GenOnly => "gen-only",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub ablation: Ablation,
    pub enumeration: EnumConfig,
    /// Entity matches considered per mention.
    pub link_top_k: usize,
    /// Use the disambiguation model when one is loaded.
    pub disambiguate: bool,
    /// Candidates shown to the generator.
    pub top_k: usize,
    pub beam: usize,
    /// Seed of the random scorer in the gen-only ablation.
    pub random_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            ablation: Ablation::Full,
            enumeration: EnumConfig::default(),
            link_top_k: 5,
            disambiguate: true,
            top_k: 5,
            beam: 10,
            random_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    Generated { beam_index: usize },
    RankerFallback,
    /// Nothing linked and nothing to rank.
    NoEntity,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub linked_entities: Vec<EntityId>,
    pub candidates: usize,
    pub truncated: bool,
    /// Beams examined before one was accepted (all of them on fallback).
    pub beams_tried: usize,
    /// Decoded beam texts in order, for EXEC/VALID statistics.
    pub beams: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    /// Printed final form; `None` when there was nothing to return.
    pub s_expression: Option<String>,
    pub answers: Vec<String>,
    pub provenance: Provenance,
    pub diagnostics: Diagnostics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Outcome of execution-guided selection.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub expr: Option<SExpr>,
    pub answer: Denotation,
    pub provenance: Provenance,
    pub beams_tried: usize,
}

/// A generated form is accepted when it parses, passes the KB check,
/// executes and has a non-empty answer.
pub fn accept_beam(beam: &GeneratedBeam, kb: &KnowledgeBase) -> Option<Denotation> {
    let expr = beam.expr.as_ref()?;
    if !check(expr, kb).is_clean() {
        return None;
    }
    execute(expr, kb).ok().filter(|d| !d.is_empty())
}

/// Tries beams in order; otherwise returns the highest-ranked candidate with
/// a non-empty answer, else the highest-ranked executable one.
pub fn select(beams: &[GeneratedBeam], ranked: &RankedList, kb: &KnowledgeBase) -> Selection {
    for (i, beam) in beams.iter().enumerate() {
        if let Some(answer) = accept_beam(beam, kb) {
            return Selection {
                expr: beam.expr.clone(),
                answer,
                provenance: Provenance::Generated { beam_index: i },
                beams_tried: i + 1,
            };
        }
    }
    let executed: Vec<(usize, Denotation)> = ranked
        .items
        .iter()
        .enumerate()
        .filter_map(|(i, c)| match &c.denotation {
            Some(d) => Some((i, d.clone())),
            None => execute(&c.expr, kb).ok().map(|d| (i, d)),
        })
        .collect();
    let pick = executed.iter().find(|(_, d)| !d.is_empty()).or(executed.first());
    match pick {
        Some((i, d)) => Selection {
            expr: Some(ranked.items[*i].expr.clone()),
            answer: d.clone(),
            provenance: Provenance::RankerFallback,
            beams_tried: beams.len(),
        },
        None => Selection {
            expr: None,
            answer: Denotation::empty(),
            provenance: if ranked.is_empty() { Provenance::NoEntity } else { Provenance::RankerFallback },
            beams_tried: beams.len(),
        },
    }
}

/// Trained models for inference. The generator is optional for rank-only
/// runs and the disambiguator falls back to popularity.
#[derive(Debug, Clone)]
pub struct Models {
    pub disambiguator: Option<Disambiguator>,
    pub ranker: Ranker,
    pub generator: Option<Generator>,
}

pub fn infer(id: &str, question: &str, kb: &KnowledgeBase, models: &Models, config: &PipelineConfig) -> Result<Prediction> {
    let disamb = if config.disambiguate { models.disambiguator.as_ref() } else { None };
    let links = link(question, kb, disamb, config.link_top_k)?;
    let spans = linked_spans(&links);
    let entities: Vec<EntityId> = spans.iter().map(|l| l.entity.clone()).collect();
    let (tokens, slots) = slot_question(question, &spans);
    let pool = enumerate_candidates(kb, &entities, &config.enumeration);
    let mut diagnostics = Diagnostics {
        linked_entities: entities.clone(),
        candidates: pool.candidates.len(),
        truncated: pool.stats.truncated,
        ..Default::default()
    };
    let random = RandomScorer { seed: config.random_seed };
    let scorer: &dyn CandidateScorer = match config.ablation {
        Ablation::GenOnly => &random,
        _ => &models.ranker,
    };
    let ranked = rank(scorer, &tokens, &slots, pool.candidates)?;
    let beams = match (config.ablation, &models.generator) {
        (Ablation::RankOnly, _) => Vec::new(),
        (_, Some(g)) if !entities.is_empty() => g.generate(kb, &tokens, &slots, ranked.top(config.top_k), config.top_k, config.beam)?,
        (_, Some(_)) => Vec::new(),
        (_, None) => return Err(Error::Invalid(format!("{} inference needs a generator", config.ablation.name()))),
    };
    diagnostics.beams = beams.iter().map(|b| b.text.clone()).collect();
    let sel = select(&beams, &ranked, kb);
    diagnostics.beams_tried = sel.beams_tried;
    Ok(Prediction {
        id: id.to_string(),
        s_expression: sel.expr.as_ref().map(SExpr::print),
        answers: sel.answer.answer_strings(),
        provenance: if entities.is_empty() { Provenance::NoEntity } else { sel.provenance },
        diagnostics,
        error: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    /// Named SHA-256 digests of models and inputs.
    pub checksums: Vec<(String, String)>,
    pub examples: usize,
    pub errors: usize,
    pub elapsed_ms: u128,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of a config's JSON form.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    sha256_hex(&serde_json::to_vec(config).expect("config serializes"))
}

impl Models {
    pub fn checksums(&self) -> Vec<(String, String)> {
        let digest = |p: &kbqa_neural::ParamStore| sha256_hex(&serde_json::to_vec(p).expect("params serialize"));
        let mut out = vec![("ranker".to_string(), digest(&self.ranker.scorer.params))];
        if let Some(d) = &self.disambiguator {
            out.push(("disambiguator".into(), digest(&d.scorer.params)));
        }
        if let Some(g) = &self.generator {
            out.push(("generator".into(), digest(&g.model.params)));
        }
        out
    }
}

/// Runs [`infer`] over a dataset on `jobs` threads. Per-question errors are
/// recorded on the prediction and the run continues. Output order follows
/// the input.
pub fn batch_infer(
    examples: &[Example],
    kb: &KnowledgeBase,
    models: &Models,
    config: &PipelineConfig,
    jobs: usize,
) -> (Vec<Prediction>, RunManifest) {
    let start = Instant::now();
    let run_one = |ex: &Example| {
        infer(&ex.id, &ex.question, kb, models, config).unwrap_or_else(|e| Prediction {
            id: ex.id.clone(),
            s_expression: None,
            answers: Vec::new(),
            provenance: Provenance::RankerFallback,
            diagnostics: Diagnostics::default(),
            error: Some(e.to_string()),
        })
    };
    let jobs = jobs.max(1).min(examples.len().max(1));
    let predictions: Vec<Prediction> = if jobs == 1 {
        examples.iter().map(run_one).collect()
    } else {
        let chunk = examples.len().div_ceil(jobs);
        std::thread::scope(|s| {
            let handles: Vec<_> =
                examples.chunks(chunk).map(|part| s.spawn(move || part.iter().map(run_one).collect::<Vec<_>>())).collect();
            handles.into_iter().flat_map(|h| h.join().expect("inference worker panicked")).collect()
        })
    };
    let manifest = RunManifest {
        command: "infer".into(),
        config_hash: config_hash(config),
        seed: Some(config.random_seed),
        checksums: models.checksums(),
        examples: predictions.len(),
        errors: predictions.iter().filter(|p| p.error.is_some()).count(),
        elapsed_ms: start.elapsed().as_millis(),
    };
    (predictions, manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enumerate::Candidate;
    use crate::kb::Value;
    use crate::sexpr::parse_with;

    fn kb() -> KnowledgeBase {
        let mut b = KnowledgeBase::builder();
        b.triple("m.f1", "film.director", Value::entity("m.d"))
            .triple("m.f2", "film.director", Value::entity("m.d"))
            .triple("m.f1", "film.year", Value::int(1990))
            .typed("m.f1", "film.film")
            .typed("m.f2", "film.film");
        b.build().unwrap()
    }

    fn beam(kb: &KnowledgeBase, text: &str) -> GeneratedBeam {
        GeneratedBeam { text: text.into(), expr: parse_with(text, kb).ok(), log_prob: -1.0 }
    }

    fn ranked(kb: &KnowledgeBase, forms: &[&str]) -> RankedList {
        let pool: Vec<Candidate> = forms
            .iter()
            .map(|f| {
                let e = parse_with(f, kb).unwrap();
                let d = execute(&e, kb).unwrap();
                Candidate::enumerated(e, d)
            })
            .collect();
        let scores: Vec<f64> = (0..forms.len()).map(|i| -(i as f64)).collect();
        RankedList::from_scores(pool, &scores)
    }

    #[test]
    fn first_valid_beam_is_taken() {
        let kb = kb();
        let r = ranked(&kb, &["(JOIN (R film.director) m.f1)"]);
        let beams = vec![beam(&kb, "(JOIN film.director m.d)"), beam(&kb, "(JOIN (R film.year) m.f1)")];
        let s = select(&beams, &r, &kb);
        assert_eq!(s.provenance, Provenance::Generated { beam_index: 0 });
        assert_eq!(s.answer.len(), 2);
    }

    #[test]
    fn empty_beam_is_skipped_for_the_next_valid_one() {
        let kb = kb();
        let r = ranked(&kb, &["(JOIN (R film.director) m.f1)"]);
        let beams = vec![
            beam(&kb, "(AND (JOIN film.director m.d) (JOIN film.year m.d))"),
            beam(&kb, "(AND film.film (JOIN film.director m.d))"),
        ];
        assert!(beams[0].expr.is_some());
        let s = select(&beams, &r, &kb);
        assert_eq!(s.provenance, Provenance::Generated { beam_index: 1 });
        assert_eq!(s.beams_tried, 2);
    }

    #[test]
    fn unparseable_beams_fall_back_to_non_empty_candidate() {
        let kb = kb();
        let r = ranked(&kb, &["(JOIN (R film.year) m.f2)", "(JOIN (R film.year) m.f1)"]);
        let beams = vec![beam(&kb, "(JOIN film.director"), beam(&kb, "(FOO m.d)")];
        assert!(beams.iter().all(|b| b.expr.is_none()));
        let s = select(&beams, &r, &kb);
        assert_eq!(s.provenance, Provenance::RankerFallback);
        assert_eq!(s.expr.unwrap().print(), "(JOIN (R film.year) m.f1)");
        let all_empty = ranked(&kb, &["(JOIN (R film.year) m.f2)"]);
        let s = select(&[], &all_empty, &kb);
        assert_eq!(s.expr.unwrap().print(), "(JOIN (R film.year) m.f2)");
        assert!(s.answer.is_empty());
    }

    #[test]
    fn nothing_to_select_is_no_entity() {
        let kb = kb();
        let s = select(&[], &RankedList::default(), &kb);
        assert_eq!(s.provenance, Provenance::NoEntity);
        assert!(s.expr.is_none());
    }

    #[test]
    fn prediction_json_shape() {
        let p = Prediction {
            id: "q".into(),
            s_expression: Some("(JOIN film.director m.d)".into()),
            answers: vec!["m.f1".into()],
            provenance: Provenance::Generated { beam_index: 2 },
            diagnostics: Diagnostics::default(),
            error: None,
        };
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains(r#""provenance":{"kind":"generated","beam_index":2}"#), "{s}");
        assert!(!s.contains("error"));
        assert_eq!(serde_json::from_str::<Prediction>(&s).unwrap(), p);
    }
}
