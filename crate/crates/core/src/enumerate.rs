//! Candidate logical forms reachable from linked entities: one- and two-hop
//! joins, their class-constrained variants, and intersections of one-hop
//! paths from two different entities.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::kb::{EntityId, KnowledgeBase, Value};
use crate::sexpr::{semantically_equal, Denotation, RelationExpr, SExpr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnumConfig {
    pub max_candidates: usize,
    pub two_hop: bool,
    pub class_variants: bool,
    pub entity_pairs: bool,
}

impl Default for EnumConfig {
    fn default() -> Self {
        Self { max_candidates: 2000, two_hop: true, class_variants: true, entity_pairs: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Enumerated,
    Generated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub expr: SExpr,
    pub source: Source,
    pub score: Option<f64>,
    pub denotation: Option<Denotation>,
}

impl Candidate {
    pub fn enumerated(expr: SExpr, denotation: Denotation) -> Self {
        Self { expr, source: Source::Enumerated, score: None, denotation: Some(denotation) }
    }

    /// Executable with an empty answer.
    pub fn is_empty(&self) -> bool {
        self.denotation.as_ref().is_some_and(Denotation::is_empty)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnumStats {
    /// Distinct forms found before truncation.
    pub found: usize,
    pub truncated: bool,
    pub empty: usize,
    pub unknown_entities: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub candidates: Vec<Candidate>,
    pub stats: EnumStats,
}

type Path = (SExpr, BTreeSet<Value>);

fn one_hop(kb: &KnowledgeBase, e: &EntityId) -> Vec<(RelationExpr, Path)> {
    let type_rel = kb.type_relation();
    let mut out = Vec::new();
    for (r, objs) in kb.outgoing(e.as_str()) {
        if r != type_rel {
            let rel = RelationExpr::inverse(r.clone());
            out.push((rel.clone(), (SExpr::join(rel, SExpr::Entity(e.clone())), objs.clone())));
        }
    }
    let me = Value::Entity(e.clone());
    for r in kb.incoming(&me) {
        if r != type_rel {
            let subs: BTreeSet<Value> = kb.subjects_of(r.as_str(), &me).iter().map(|s| Value::Entity(s.clone())).collect();
            let rel = RelationExpr::forward(r.clone());
            out.push((rel.clone(), (SExpr::join(rel, SExpr::Entity(e.clone())), subs)));
        }
    }
    out
}

/// Extends a path by one hop in every direction except straight back along
/// the relation just taken.
fn extend(kb: &KnowledgeBase, via: &RelationExpr, path: &Path) -> Vec<Path> {
    let type_rel = kb.type_relation();
    let back = via.flipped();
    let mut next: BTreeMap<RelationExpr, BTreeSet<Value>> = BTreeMap::new();
    for x in &path.1 {
        if let Value::Entity(xe) = x {
            for (r, objs) in kb.outgoing(xe.as_str()) {
                let rel = RelationExpr::inverse(r.clone());
                if r != type_rel && rel != back {
                    next.entry(rel).or_default().extend(objs.iter().cloned());
                }
            }
        }
        for r in kb.incoming(x) {
            let rel = RelationExpr::forward(r.clone());
            if r != type_rel && rel != back {
                let subs = kb.subjects_of(r.as_str(), x);
                next.entry(rel).or_default().extend(subs.iter().map(|s| Value::Entity(s.clone())));
            }
        }
    }
    next.into_iter().map(|(rel, den)| (SExpr::join(rel, path.0.clone()), den)).collect()
}

fn class_variants(kb: &KnowledgeBase, path: &Path) -> Vec<Path> {
    let mut classes: BTreeSet<&String> = BTreeSet::new();
    for v in &path.1 {
        if let Value::Entity(e) = v {
            classes.extend(kb.classes_of(e.as_str()));
        }
    }
    classes
        .into_iter()
        .map(|c| {
            let members = kb.instances_of(c);
            let den = path.1.iter().filter(|v| v.as_entity().is_some_and(|e| members.contains(e))).cloned().collect();
            (SExpr::and(SExpr::Class(c.clone()), path.0.clone()), den)
        })
        .collect()
}

/// Enumerates the candidate pool for the given linked entities. Entities
/// absent from the KB are skipped and counted.
pub fn enumerate_candidates(kb: &KnowledgeBase, entities: &[EntityId], config: &EnumConfig) -> CandidatePool {
    let mut stats = EnumStats::default();
    let mut paths: Vec<Path> = Vec::new();
    let mut firsts: Vec<Vec<Path>> = Vec::new();
    let mut seen_entities = HashSet::new();
    for e in entities {
        if !seen_entities.insert(e) {
            continue;
        }
        if !kb.has_entity(e.as_str()) {
            stats.unknown_entities += 1;
            continue;
        }
        let hops = one_hop(kb, e);
        let mut mine = Vec::new();
        for (rel, p) in &hops {
            mine.push(p.clone());
            if config.two_hop {
                paths.extend(extend(kb, rel, p));
            }
        }
        paths.extend(mine.iter().cloned());
        firsts.push(mine);
    }
    if config.class_variants {
        let variants: Vec<Path> = paths.iter().flat_map(|p| class_variants(kb, p)).collect();
        paths.extend(variants);
    }
    if config.entity_pairs {
        for i in 0..firsts.len() {
            for j in i + 1..firsts.len() {
                for a in &firsts[i] {
                    for b in &firsts[j] {
                        let den: BTreeSet<Value> = a.1.intersection(&b.1).cloned().collect();
                        if !den.is_empty() {
                            let (x, y) = if b.0.print() < a.0.print() { (b, a) } else { (a, b) };
                            paths.push((SExpr::and(x.0.clone(), y.0.clone()), den));
                        }
                    }
                }
            }
        }
    }
    let mut keyed: BTreeMap<(usize, String), Path> = BTreeMap::new();
    let mut canon_seen: HashSet<String> = HashSet::new();
    for p in paths {
        let canon = p.0.canonical().print();
        if canon_seen.insert(canon) {
            let printed = p.0.print();
            keyed.insert((printed.len(), printed), p);
        }
    }
    stats.found = keyed.len();
    stats.truncated = keyed.len() > config.max_candidates;
    let candidates: Vec<Candidate> = keyed
        .into_values()
        .take(config.max_candidates)
        .map(|(expr, den)| Candidate::enumerated(expr, Denotation::Values(den)))
        .collect();
    stats.empty = candidates.iter().filter(|c| c.is_empty()).count();
    CandidatePool { candidates, stats }
}

pub fn covers_gold(candidates: &[Candidate], gold: &SExpr) -> bool {
    position_of(candidates, gold).is_some()
}

pub fn position_of(candidates: &[Candidate], gold: &SExpr) -> Option<usize> {
    let canon = gold.canonical();
    candidates.iter().position(|c| c.expr == *gold || semantically_equal(&c.expr, &canon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sexpr::{execute, parse_with};

    fn prints(pool: &CandidatePool) -> Vec<String> {
        pool.candidates.iter().map(|c| c.expr.print()).collect()
    }

    #[test]
    fn two_triple_kb_is_enumerated_exhaustively() {
        let mut b = KnowledgeBase::builder();
        b.triple("v1", "directed_by", Value::entity("p1")).typed("v1", "mv");
        let kb = b.build().unwrap();
        let pool = enumerate_candidates(&kb, &[EntityId::from("p1")], &EnumConfig::default());
        // One hop into v1, its class variant; v1 has no other edges and
        // going back along directed_by is skipped.
        assert_eq!(prints(&pool), vec!["(JOIN directed_by p1)", "(AND mv (JOIN directed_by p1))"]);
        for c in &pool.candidates {
            assert_eq!(c.denotation.as_ref().unwrap(), &Denotation::Values(BTreeSet::from([Value::entity("v1")])));
        }
    }

    #[test]
    fn isolated_entity_has_no_candidates() {
        let mut b = KnowledgeBase::builder();
        b.triple("a", "r", Value::entity("b")).typed("lonely", "c");
        let kb = b.build().unwrap();
        assert!(enumerate_candidates(&kb, &[EntityId::from("lonely")], &EnumConfig::default()).candidates.is_empty());
        assert!(enumerate_candidates(&kb, &[], &EnumConfig::default()).candidates.is_empty());
        assert!(!covers_gold(&[], &SExpr::entity("a")));
    }

    #[test]
    fn chain_reaches_two_hops_back() {
        let mut b = KnowledgeBase::builder();
        b.triple("e1", "r1", Value::entity("e2")).triple("e2", "r2", Value::entity("e3"));
        let kb = b.build().unwrap();
        let pool = enumerate_candidates(&kb, &[EntityId::from("e3")], &EnumConfig::default());
        let gold = parse_with("(JOIN r1 (JOIN r2 e3))", &kb).unwrap();
        let i = position_of(&pool.candidates, &gold).expect("two-hop candidate");
        assert_eq!(
            pool.candidates[i].denotation.as_ref().unwrap(),
            &Denotation::Values(BTreeSet::from([Value::entity("e1")]))
        );
    }

    #[test]
    fn entity_pairs_intersect_and_cache_matches_execution() {
        let mut b = KnowledgeBase::builder();
        b.triple("f1", "film.director", Value::entity("d1"))
            .triple("f2", "film.director", Value::entity("d1"))
            .triple("f1", "film.actor", Value::entity("a1"))
            .triple("f3", "film.actor", Value::entity("a1"))
            .typed("f1", "media.film")
            .typed("f2", "media.film");
        let kb = b.build().unwrap();
        let ents = [EntityId::from("d1"), EntityId::from("a1")];
        let pool = enumerate_candidates(&kb, &ents, &EnumConfig::default());
        let gold = parse_with("(AND (JOIN film.director d1) (JOIN film.actor a1))", &kb).unwrap();
        assert!(covers_gold(&pool.candidates, &gold));
        for c in &pool.candidates {
            assert_eq!(c.denotation.as_ref().unwrap(), &execute(&c.expr, &kb).unwrap(), "{}", c.expr);
            assert!(!c.expr.contains_superlative_or_comparison());
        }
        let again = enumerate_candidates(&kb, &ents, &EnumConfig::default());
        assert_eq!(pool, again);
    }

    #[test]
    fn truncation_is_recorded() {
        let mut b = KnowledgeBase::builder();
        for i in 0..10 {
            b.triple(&format!("s{i}"), &format!("r{i}"), Value::entity("hub"));
        }
        let kb = b.build().unwrap();
        let cfg = EnumConfig { max_candidates: 3, ..Default::default() };
        let pool = enumerate_candidates(&kb, &[EntityId::from("hub")], &cfg);
        assert_eq!(pool.candidates.len(), 3);
        assert!(pool.stats.truncated);
        assert_eq!(pool.stats.found, 10);
    }
}
