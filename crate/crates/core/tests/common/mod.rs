//! Oracles and random generators shared by the integration tests.
//!
//! The reference interpreter walks the raw triple list directly and never
//! touches the KB indexes or the crate's evaluator.
#![allow(dead_code)]

use std::collections::BTreeSet;

use kbqa_core::enumerate::{enumerate_candidates, EnumConfig};
use kbqa_core::generator::GeneratedBeam;
use kbqa_core::kb::{EntityId, KnowledgeBase, LiteralKind, RelationId, Value};
use kbqa_core::ranker::RankedList;
use kbqa_core::sexpr::{check, execute, parse_with, CompareOp, Denotation, RelationExpr, SExpr};
use rand::seq::SliceRandom;
use rand::Rng;

pub const TYPE: &str = "type";

/// A random KB together with the triple list it was built from.
pub struct Fixture {
    pub kb: KnowledgeBase,
    pub triples: Vec<(String, String, Value)>,
    pub entities: Vec<String>,
    pub classes: Vec<String>,
    pub entity_relations: Vec<String>,
    pub number_relations: Vec<String>,
    pub date_relations: Vec<String>,
}

impl Fixture {
    pub fn relations(&self) -> Vec<String> {
        let mut all = self.entity_relations.clone();
        all.extend(self.number_relations.iter().cloned());
        all.extend(self.date_relations.iter().cloned());
        all
    }
}

pub fn random_number<R: Rng>(rng: &mut R) -> Value {
    // A small range so ties and threshold hits are common.
    if rng.gen_bool(0.7) {
        Value::int(rng.gen_range(0..12))
    } else {
        let halves = rng.gen_range(0..24) as f64 / 2.0;
        Value::literal(LiteralKind::Float, &halves.to_string()).unwrap()
    }
}

pub fn random_date<R: Rng>(rng: &mut R) -> Value {
    let raw = format!("{}-{:02}-{:02}", rng.gen_range(1990..1994), rng.gen_range(1..4), rng.gen_range(1..4));
    Value::literal(LiteralKind::Date, &raw).unwrap()
}

/// At most 50 entities and 10 relations (type included).
pub fn random_fixture<R: Rng>(rng: &mut R) -> Fixture {
    let n_ent = rng.gen_range(2..=50);
    let entities: Vec<String> = (0..n_ent).map(|i| format!("m.{i:02x}")).collect();
    let classes: Vec<String> = (0..rng.gen_range(1..=4)).map(|i| format!("dom.c{i}")).collect();
    let n_ent_rel = rng.gen_range(1..=5);
    let n_num_rel = rng.gen_range(0..=2);
    let n_date_rel = rng.gen_range(0..=2);
    let entity_relations: Vec<String> = (0..n_ent_rel).map(|i| format!("dom.r{i}")).collect();
    let number_relations: Vec<String> = (0..n_num_rel).map(|i| format!("dom.n{i}")).collect();
    let date_relations: Vec<String> = (0..n_date_rel).map(|i| format!("dom.d{i}")).collect();
    let mut triples = Vec::new();
    let pick = |rng: &mut R| entities[rng.gen_range(0..entities.len())].clone();
    for _ in 0..rng.gen_range(1..=3 * n_ent) {
        let r = entity_relations.choose(rng).unwrap().clone();
        triples.push((pick(rng), r, Value::entity(pick(rng))));
    }
    for r in &number_relations {
        for _ in 0..rng.gen_range(0..=n_ent) {
            triples.push((pick(rng), r.clone(), random_number(rng)));
        }
    }
    for r in &date_relations {
        for _ in 0..rng.gen_range(0..=n_ent) {
            triples.push((pick(rng), r.clone(), random_date(rng)));
        }
    }
    for (i, e) in entities.iter().enumerate() {
        for (j, c) in classes.iter().enumerate() {
            // The first entity always has the first class.
            if rng.gen_bool(0.4) || i + j == 0 {
                triples.push((e.clone(), TYPE.to_string(), Value::class(c.clone())));
            }
        }
    }
    let mut b = KnowledgeBase::builder();
    for (s, r, o) in &triples {
        b.triple(s, r, o.clone());
    }
    let kb = b.build().unwrap();
    let used = |rs: Vec<String>| rs.into_iter().filter(|r| triples.iter().any(|t| &t.1 == r)).collect::<Vec<_>>();
    let (entity_relations, number_relations, date_relations) =
        (used(entity_relations), used(number_relations), used(date_relations));
    let entities: Vec<String> = entities.into_iter().filter(|e| kb.has_entity(e)).collect();
    let classes: Vec<String> = classes.into_iter().filter(|c| kb.has_class(c)).collect();
    Fixture { kb, triples, entities, classes, entity_relations, number_relations, date_relations }
}

fn rel(name: &str, inverse: bool) -> RelationExpr {
    let r = RelationId(name.to_string());
    if inverse {
        RelationExpr::inverse(r)
    } else {
        RelationExpr::forward(r)
    }
}

fn op<R: Rng>(rng: &mut R) -> CompareOp {
    *[CompareOp::Lt, CompareOp::Le, CompareOp::Gt, CompareOp::Ge].choose(rng).unwrap()
}

fn ordered_relation<R: Rng>(rng: &mut R, f: &Fixture) -> Option<(String, bool)> {
    let mut opts: Vec<(String, bool)> = f.number_relations.iter().map(|r| (r.clone(), true)).collect();
    opts.extend(f.date_relations.iter().map(|r| (r.clone(), false)));
    opts.choose(rng).cloned()
}

/// A well-formed set expression of depth at most `depth` over the fixture's
/// schema.
pub fn random_set_expr<R: Rng>(rng: &mut R, f: &Fixture, depth: usize) -> SExpr {
    let leaf = depth <= 1 || rng.gen_bool(0.25);
    if leaf {
        return match rng.gen_range(0..10) {
            0..=5 => SExpr::entity(f.entities.choose(rng).unwrap()),
            6..=8 => SExpr::class(f.classes.choose(rng).unwrap()),
            _ => match ordered_relation(rng, f) {
                Some((_, true)) => SExpr::Literal(random_number(rng)),
                Some((_, false)) => SExpr::Literal(random_date(rng)),
                None => SExpr::entity(f.entities.choose(rng).unwrap()),
            },
        };
    }
    match rng.gen_range(0..10) {
        0..=4 => {
            let all = f.relations();
            let r = all.choose(rng).unwrap();
            SExpr::join(rel(r, rng.gen_bool(0.5)), random_set_expr(rng, f, depth - 1))
        }
        5..=6 => SExpr::and(random_set_expr(rng, f, depth - 1), random_set_expr(rng, f, depth - 1)),
        7..=8 => match ordered_relation(rng, f) {
            Some((r, _)) => {
                let arg = random_set_expr(rng, f, depth - 1);
                if rng.gen_bool(0.5) {
                    SExpr::argmin(arg, rel(&r, false))
                } else {
                    SExpr::argmax(arg, rel(&r, false))
                }
            }
            None => random_set_expr(rng, f, depth - 1),
        },
        _ => match ordered_relation(rng, f) {
            Some((r, numeric)) => {
                let lit = if numeric { random_number(rng) } else { random_date(rng) };
                SExpr::Compare(op(rng), rel(&r, false), lit)
            }
            None => random_set_expr(rng, f, depth - 1),
        },
    }
}

/// A well-formed query: a set expression, sometimes counted.
pub fn random_expr<R: Rng>(rng: &mut R, f: &Fixture, depth: usize) -> SExpr {
    if depth >= 2 && rng.gen_bool(0.15) {
        SExpr::count(random_set_expr(rng, f, depth - 1))
    } else {
        random_set_expr(rng, f, depth)
    }
}

/// Like [`random_expr`] but with a chance of unknown names, ill-typed
/// superlatives and comparisons, and nested counts.
pub fn random_messy_expr<R: Rng>(rng: &mut R, f: &Fixture, depth: usize) -> SExpr {
    let leaf = depth <= 1 || rng.gen_bool(0.25);
    if leaf {
        return match rng.gen_range(0..12) {
            0 => SExpr::entity("m.unknown"),
            1 => SExpr::class("dom.nothing"),
            2 => SExpr::Literal(Value::literal(LiteralKind::String, "abc").unwrap()),
            _ => random_set_expr(rng, f, 1),
        };
    }
    let all = f.relations();
    let any_rel = |rng: &mut R| {
        if rng.gen_bool(0.1) {
            rel("dom.missing", false)
        } else {
            rel(all.choose(rng).unwrap(), rng.gen_bool(0.5))
        }
    };
    let sub = |rng: &mut R| random_messy_expr(rng, f, depth - 1);
    match rng.gen_range(0..12) {
        0..=3 => {
            let r = any_rel(rng);
            SExpr::join(r, sub(rng))
        }
        4..=5 => SExpr::and(sub(rng), sub(rng)),
        6 => SExpr::count(sub(rng)),
        7 => {
            let r = any_rel(rng);
            SExpr::argmin(sub(rng), r)
        }
        8 => {
            let r = any_rel(rng);
            SExpr::argmax(sub(rng), r)
        }
        9 => {
            let lit = match rng.gen_range(0..3) {
                0 => random_number(rng),
                1 => random_date(rng),
                _ => Value::literal(LiteralKind::String, "x").unwrap(),
            };
            SExpr::Compare(op(rng), any_rel(rng), lit)
        }
        _ => random_set_expr(rng, f, depth),
    }
}

fn random_ident<R: Rng>(rng: &mut R, min_parts: usize, max_parts: usize) -> String {
    let parts = rng.gen_range(min_parts..=max_parts);
    const WORDS: [&str; 8] = ["film", "music", "recording", "artist", "length", "date_of_birth", "people", "x1"];
    (0..parts).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(".")
}

/// An arbitrary AST, not tied to any KB, whose atoms the KB-free parser
/// classifies the same way it was built.
pub fn random_ast<R: Rng>(rng: &mut R, depth: usize) -> SExpr {
    let rel = |rng: &mut R| {
        let r = RelationId(random_ident(rng, 1, 3));
        if rng.gen_bool(0.5) {
            RelationExpr::inverse(r)
        } else {
            RelationExpr::forward(r)
        }
    };
    if depth <= 1 || rng.gen_bool(0.2) {
        return match rng.gen_range(0..5) {
            0 => SExpr::entity(&format!("m.{:x}", rng.gen_range(0..100_000))),
            1 => SExpr::entity(&random_ident(rng, 1, 1)),
            2 => SExpr::class(&random_ident(rng, 2, 3)),
            3 => SExpr::Literal(random_literal(rng)),
            _ => SExpr::Literal(random_date(rng)),
        };
    }
    match rng.gen_range(0..7) {
        0 | 1 => SExpr::join(rel(rng), random_ast(rng, depth - 1)),
        2 => SExpr::and(random_ast(rng, depth - 1), random_ast(rng, depth - 1)),
        3 => SExpr::count(random_ast(rng, depth - 1)),
        4 => SExpr::argmin(random_ast(rng, depth - 1), rel(rng)),
        5 => SExpr::argmax(random_ast(rng, depth - 1), rel(rng)),
        _ => SExpr::Compare(op(rng), rel(rng), random_number(rng)),
    }
}

fn random_literal<R: Rng>(rng: &mut R) -> Value {
    match rng.gen_range(0..4) {
        0 => Value::int(rng.gen_range(-1000..1000)),
        1 => Value::literal(LiteralKind::Float, &format!("{}", rng.gen_range(-1e4..1e4f64))).unwrap(),
        2 => random_date(rng),
        _ => Value::literal(LiteralKind::String, &random_ident(rng, 1, 1)).unwrap(),
    }
}

// ---------------------------------------------------------------------------
// Reference interpreter

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
enum Key {
    Num(f64),
    Day(i64, i64, i64),
}

fn key(v: &Value) -> Option<Key> {
    match v {
        Value::Literal { kind: LiteralKind::Int | LiteralKind::Float, raw } => raw.parse().ok().map(Key::Num),
        Value::Literal { kind: LiteralKind::Date, raw } => {
            let p: Vec<i64> = raw.split('-').map(|x| x.parse().unwrap()).collect();
            Some(Key::Day(p[0], *p.get(1).unwrap_or(&1), *p.get(2).unwrap_or(&1)))
        }
        _ => None,
    }
}

fn cmp_keys(a: Key, b: Key) -> Result<std::cmp::Ordering, String> {
    match (a, b) {
        (Key::Num(x), Key::Num(y)) => Ok(x.partial_cmp(&y).unwrap()),
        (Key::Day(..), Key::Day(..)) => Ok(a.partial_cmp(&b).unwrap()),
        _ => Err("mixed kinds".into()),
    }
}

/// Values reachable from `x` over `r`, by scanning every triple.
fn reach(f: &Fixture, x: &Value, r: &RelationExpr) -> Vec<Value> {
    let mut out = Vec::new();
    for (s, rr, o) in &f.triples {
        if rr != &r.relation.0 {
            continue;
        }
        if r.inverse {
            if o == x {
                out.push(Value::entity(s.clone()));
            }
        } else if matches!(x, Value::Entity(e) if e.0 == *s) {
            out.push(o.clone());
        }
    }
    out
}

fn set(e: &SExpr, f: &Fixture) -> Result<BTreeSet<Value>, String> {
    match e {
        SExpr::Entity(id) => Ok([Value::Entity(id.clone())].into()),
        SExpr::Class(c) => Ok(f
            .triples
            .iter()
            .filter(|(_, r, o)| r == TYPE && *o == Value::class(c.clone()))
            .map(|(s, _, _)| Value::entity(s.clone()))
            .collect()),
        SExpr::Literal(v) => Ok([v.clone()].into()),
        SExpr::Join(r, a) => {
            let arg = set(a, f)?;
            let mut out = BTreeSet::new();
            for (s, rr, o) in &f.triples {
                if rr != &r.relation.0 {
                    continue;
                }
                let (from, to) = if r.inverse { (Value::entity(s.clone()), o.clone()) } else { (o.clone(), Value::entity(s.clone())) };
                if arg.contains(&from) {
                    out.insert(to);
                }
            }
            Ok(out)
        }
        SExpr::And(a, b) => {
            let (x, y) = (set(a, f)?, set(b, f)?);
            Ok(x.into_iter().filter(|v| y.contains(v)).collect())
        }
        SExpr::Count(_) => Err("count in set position".into()),
        SExpr::ArgMin(a, r) | SExpr::ArgMax(a, r) => {
            let want_max = matches!(e, SExpr::ArgMax(..));
            let mut keyed = Vec::new();
            for x in set(a, f)? {
                let mut ks = Vec::new();
                for v in reach(f, &x, r) {
                    ks.push(key(&v).ok_or("not ordinal")?);
                }
                let Some(mut best) = ks.first().copied() else { continue };
                for &k in &ks[1..] {
                    let o = cmp_keys(k, best)?;
                    if (want_max && o.is_gt()) || (!want_max && o.is_lt()) {
                        best = k;
                    }
                }
                keyed.push((x, best));
            }
            let mut extreme: Option<Key> = None;
            for (_, k) in &keyed {
                extreme = Some(match extreme {
                    None => *k,
                    Some(b) => {
                        let o = cmp_keys(*k, b)?;
                        if (want_max && o.is_gt()) || (!want_max && o.is_lt()) {
                            *k
                        } else {
                            b
                        }
                    }
                });
            }
            let mut out = BTreeSet::new();
            for (x, k) in keyed {
                if cmp_keys(k, extreme.unwrap())?.is_eq() {
                    out.insert(x);
                }
            }
            Ok(out)
        }
        SExpr::Compare(op, r, lit) => {
            let target = key(lit).ok_or("literal not ordinal")?;
            let mut out = BTreeSet::new();
            for (s, rr, o) in &f.triples {
                if rr != &r.relation.0 {
                    continue;
                }
                let (subject, value) = if r.inverse { (o.clone(), Value::entity(s.clone())) } else { (Value::entity(s.clone()), o.clone()) };
                let ord = cmp_keys(key(&value).ok_or("value not ordinal")?, target)?;
                let holds = match op {
                    CompareOp::Lt => ord.is_lt(),
                    CompareOp::Le => ord.is_le(),
                    CompareOp::Gt => ord.is_gt(),
                    CompareOp::Ge => ord.is_ge(),
                };
                if holds {
                    out.insert(subject);
                }
            }
            Ok(out)
        }
    }
}

/// Direct recursive interpreter over the triple list.
pub fn reference_execute(e: &SExpr, f: &Fixture) -> Result<Denotation, String> {
    match e {
        SExpr::Count(a) => Ok(Denotation::Number(set(a, f)?.len() as i64)),
        _ => set(e, f).map(Denotation::Values),
    }
}

// ---------------------------------------------------------------------------
// Other oracles

/// Precision/recall F1 from explicit counts; both empty scores 1.
pub fn naive_f1(pred: &BTreeSet<String>, gold: &BTreeSet<String>) -> f64 {
    if pred.is_empty() && gold.is_empty() {
        return 1.0;
    }
    if pred.is_empty() || gold.is_empty() {
        return 0.0;
    }
    let mut hit = 0usize;
    for p in pred {
        if gold.iter().any(|g| g == p) {
            hit += 1;
        }
    }
    let p = hit as f64 / pred.len() as f64;
    let r = hit as f64 / gold.len() as f64;
    if hit == 0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn entity(id: &str) -> EntityId {
    EntityId::from(id)
}

/// A decoded beam: well-formed, messy, schema-free or truncated text.
pub fn random_beam<R: Rng>(rng: &mut R, f: &Fixture) -> GeneratedBeam {
    let text = match rng.gen_range(0..5) {
        0 | 1 => random_expr(rng, f, 3).print(),
        2 => random_messy_expr(rng, f, 3).print(),
        3 => random_ast(rng, 3).print(),
        _ => {
            let mut t = random_expr(rng, f, 3).print();
            t.truncate(rng.gen_range(0..t.len()));
            t
        }
    };
    GeneratedBeam { expr: parse_with(&text, &f.kb).ok(), text, log_prob: -rng.gen_range(0.0..10.0) }
}

pub fn random_ranked<R: Rng>(rng: &mut R, f: &Fixture) -> RankedList {
    let n = rng.gen_range(0..=2).min(f.entities.len());
    let linked: Vec<EntityId> = f.entities.choose_multiple(rng, n).map(|e| EntityId::from(e.as_str())).collect();
    let mut pool = enumerate_candidates(&f.kb, &linked, &EnumConfig::default()).candidates;
    if rng.gen_bool(0.3) {
        pool.retain(|c| c.is_empty());
    }
    let scores: Vec<f64> = (0..pool.len()).map(|_| rng.gen_range(-3.0..3.0)).collect();
    RankedList::from_scores(pool, &scores)
}

/// Independent acceptance rule: parses, checks clean, executes, non-empty.
pub fn acceptable(b: &GeneratedBeam, kb: &KnowledgeBase) -> bool {
    b.expr.as_ref().is_some_and(|e| check(e, kb).is_clean() && execute(e, kb).is_ok_and(|d| !d.is_empty()))
}
