//! Synthetic knowledge bases and question corpora with i.i.d.,
//! compositional and zero-shot test splits.
//!
//! Schema names are pseudo-words. Relations are `domain.attribute` with
//! attribute words shared across domains, so a reserved (zero-shot)
//! relation is an unseen combination of pieces seen in training. Questions
//! are rendered from templates that name each relation by its domain word
//! and one of two attribute synonyms.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{parse_jsonl, write_jsonl, EntityMention, Example, Level};
use crate::kb::{EntityId, KnowledgeBase, Value};
use crate::sexpr::{execute, CompareOp, Denotation, RelationExpr, SExpr};
use crate::{Error, Result};

pub const TRIPLES_FILE: &str = "triples.tsv";
pub const ALIASES_FILE: &str = "aliases.tsv";
pub const META_FILE: &str = "corpus.json";
pub const SPLITS: [&str; 3] = ["train", "dev", "test"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemaSpec {
    pub domains: usize,
    pub classes_per_domain: usize,
    /// Entity-valued relations whose subject is a given class.
    pub relations_per_class: usize,
    /// Integer-valued relations per class.
    pub numeric_per_class: usize,
    pub entities_per_class: usize,
    /// Size of the attribute-word pool shared by all domains.
    pub attribute_words: usize,
    /// Target fraction of gold mentions whose surface matches two or more
    /// entities.
    pub ambiguity_rate: f64,
    /// Fraction of relations and classes reserved for the zero-shot split.
    pub zero_shot_fraction: f64,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    /// Test fractions for i.i.d., compositional and zero-shot questions.
    pub test_mix: [f64; 3],
    pub max_triples: usize,
}

impl Default for SchemaSpec {
    fn default() -> Self {
        Self {
            domains: 6,
            classes_per_domain: 3,
            relations_per_class: 5,
            numeric_per_class: 1,
            entities_per_class: 40,
            attribute_words: 20,
            ambiguity_rate: 0.5,
            zero_shot_fraction: 0.15,
            train: 2000,
            dev: 200,
            test: 400,
            test_mix: [0.25, 0.25, 0.5],
            max_triples: 20_000,
        }
    }
}

impl SchemaSpec {
    /// One domain, two classes, two relations, ten entities.
    pub fn minimal() -> Self {
        Self {
            domains: 1,
            classes_per_domain: 2,
            relations_per_class: 1,
            numeric_per_class: 0,
            entities_per_class: 5,
            attribute_words: 2,
            ambiguity_rate: 0.0,
            train: 4,
            dev: 1,
            test: 4,
            ..Self::default()
        }
    }

    fn test_counts(&self) -> [usize; 3] {
        let iid = (self.test as f64 * self.test_mix[0]).round() as usize;
        let comp = ((self.test as f64 * self.test_mix[1]).round() as usize).min(self.test - iid);
        [iid, comp, self.test - iid - comp]
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(format!("infeasible spec: {m}")));
        if self.domains == 0 || self.classes_per_domain == 0 || self.relations_per_class == 0 || self.entities_per_class == 0 {
            return bad("counts must be positive");
        }
        if self.classes_per_domain < 2 {
            return bad("each domain needs at least two classes");
        }
        if self.attribute_words < self.classes_per_domain * self.relations_per_class {
            return bad("attribute pool smaller than the relations of one domain");
        }
        if !(0.0..=1.0).contains(&self.ambiguity_rate) || !(0.0..1.0).contains(&self.zero_shot_fraction) {
            return bad("rates must lie in [0, 1)");
        }
        if self.test_mix.iter().any(|f| *f < 0.0) || (self.test_mix.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("test mix must be non-negative and sum to 1");
        }
        if self.test_counts()[2] > 0 && self.zero_shot_fraction == 0.0 {
            return bad("zero-shot questions requested with nothing reserved");
        }
        Ok(())
    }
}

const SCHEMA_CONSONANTS: &[u8] = b"bdgklmnprstvz";
const NAME_CONSONANTS: &[u8] = b"cfhjwy";
const VOWELS: &[u8] = b"aeiou";

fn pseudo_word(rng: &mut ChaCha8Rng, consonants: &[u8], closed: bool, used: &mut BTreeSet<String>) -> String {
    loop {
        let mut w = String::new();
        for _ in 0..2 {
            w.push(*consonants.choose(rng).expect("consonants") as char);
            w.push(*VOWELS.choose(rng).expect("vowels") as char);
            if closed {
                w.push(*consonants.choose(rng).expect("consonants") as char);
            }
        }
        if used.insert(w.clone()) {
            return w;
        }
    }
}

#[derive(Debug, Clone)]
struct ClassSpec {
    id: String,
    domain: usize,
    word: String,
}

#[derive(Debug, Clone)]
struct RelationSpec {
    id: String,
    domain: usize,
    /// Two question surfaces for the attribute.
    words: [String; 2],
    subject: usize,
    /// Object class, or `None` for integers.
    object: Option<usize>,
}

#[derive(Debug, Clone)]
struct EntitySpec {
    id: EntityId,
    class: usize,
    name: String,
}

struct World {
    domain_words: Vec<String>,
    classes: Vec<ClassSpec>,
    relations: Vec<RelationSpec>,
    entities: Vec<EntitySpec>,
    /// Entity index to `true` for the less popular member of a homonym
    /// pair, `false` for the more popular one.
    homonym: BTreeMap<usize, bool>,
    kb: KnowledgeBase,
}

fn build_world(spec: &SchemaSpec, rng: &mut ChaCha8Rng) -> Result<World> {
    let mut used = BTreeSet::new();
    let domain_words: Vec<String> = (0..spec.domains).map(|_| pseudo_word(rng, SCHEMA_CONSONANTS, true, &mut used)).collect();
    let attrs: Vec<[String; 2]> = (0..spec.attribute_words)
        .map(|_| [pseudo_word(rng, SCHEMA_CONSONANTS, true, &mut used), pseudo_word(rng, SCHEMA_CONSONANTS, true, &mut used)])
        .collect();
    let numerics: Vec<[String; 2]> = (0..spec.classes_per_domain * spec.numeric_per_class)
        .map(|_| [pseudo_word(rng, SCHEMA_CONSONANTS, true, &mut used), pseudo_word(rng, SCHEMA_CONSONANTS, true, &mut used)])
        .collect();
    let mut classes = Vec::new();
    let mut relations = Vec::new();
    for (d, dw) in domain_words.iter().enumerate() {
        let first = classes.len();
        for _ in 0..spec.classes_per_domain {
            let word = pseudo_word(rng, SCHEMA_CONSONANTS, true, &mut used);
            classes.push(ClassSpec { id: format!("{dw}.{word}"), domain: d, word });
        }
        let mut pool: Vec<usize> = (0..attrs.len()).collect();
        pool.shuffle(rng);
        let mut pool = pool.into_iter();
        let mut numeric_pool = (0..numerics.len()).collect::<Vec<_>>();
        numeric_pool.shuffle(rng);
        let mut numeric_pool = numeric_pool.into_iter();
        for c in first..classes.len() {
            for _ in 0..spec.relations_per_class {
                let a = pool.next().expect("validated pool size");
                let mut object = first + rng.gen_range(0..spec.classes_per_domain - 1);
                if object >= c {
                    object += 1;
                }
                relations.push(RelationSpec { id: format!("{dw}.{}", attrs[a][0]), domain: d, words: attrs[a].clone(), subject: c, object: Some(object) });
            }
            for _ in 0..spec.numeric_per_class {
                let n = numeric_pool.next().expect("one numeric word per class slot");
                relations.push(RelationSpec { id: format!("{dw}.{}", numerics[n][0]), domain: d, words: numerics[n].clone(), subject: c, object: None });
            }
        }
    }

    let mut names = BTreeSet::new();
    let mut entities = Vec::new();
    for (c, _) in classes.iter().enumerate() {
        for _ in 0..spec.entities_per_class {
            let name = loop {
                let a = pseudo_word(rng, NAME_CONSONANTS, false, &mut BTreeSet::new());
                let b = pseudo_word(rng, NAME_CONSONANTS, false, &mut BTreeSet::new());
                let n = format!("{a} {b}");
                if names.insert(n.clone()) {
                    break n;
                }
            };
            entities.push(EntitySpec { id: EntityId::new(format!("m.{:04x}", entities.len())), class: c, name });
        }
    }

    // Homonym pairs across domains (across classes when there is one domain).
    let mut homonym = BTreeMap::new();
    if spec.ambiguity_rate > 0.0 {
        let share = spec.ambiguity_rate.clamp(0.3, 1.0);
        let wanted = ((entities.len() as f64 * share) / 2.0).round() as usize;
        let mut order: Vec<usize> = (0..entities.len()).collect();
        order.shuffle(rng);
        let apart = |a: &EntitySpec, b: &EntitySpec| {
            if spec.domains > 1 {
                classes[a.class].domain != classes[b.class].domain
            } else {
                a.class != b.class
            }
        };
        let mut pairs = 0;
        for i in 0..order.len() {
            if pairs == wanted {
                break;
            }
            let a = order[i];
            if homonym.contains_key(&a) {
                continue;
            }
            let partner = order[i + 1..].iter().copied().find(|&b| !homonym.contains_key(&b) && apart(&entities[a], &entities[b]));
            if let Some(b) = partner {
                let name = entities[a].name.clone();
                entities[b].name = name;
                homonym.insert(a, false);
                homonym.insert(b, true);
                pairs += 1;
            }
        }
    }

    let mut builder = KnowledgeBase::builder();
    for e in &entities {
        builder.typed(e.id.as_str(), &classes[e.class].id);
    }
    for r in &relations {
        let subjects: Vec<&EntitySpec> = entities.iter().filter(|e| e.class == r.subject).collect();
        match r.object {
            Some(oc) => {
                let objects: Vec<&EntitySpec> = entities.iter().filter(|e| e.class == oc).collect();
                for s in subjects {
                    let k = match rng.gen_range(0..10) {
                        0..=5 => 1,
                        6..=8 => 2,
                        _ => 3,
                    };
                    for o in objects.choose_multiple(rng, k) {
                        builder.triple(s.id.as_str(), &r.id, Value::Entity(o.id.clone()));
                    }
                }
            }
            None => {
                for s in subjects {
                    builder.triple(s.id.as_str(), &r.id, Value::int(rng.gen_range(1..1000)));
                }
            }
        }
    }
    for (i, e) in entities.iter().enumerate() {
        let pop = match homonym.get(&i) {
            Some(false) => rng.gen_range(60..=100),
            Some(true) => rng.gen_range(1..=40),
            None => rng.gen_range(1..=100),
        };
        builder.alias(&e.name, e.id.as_str(), f64::from(pop));
    }
    let kb = builder.build()?;
    if kb.num_triples() > spec.max_triples {
        return Err(Error::Invalid(format!("infeasible spec: {} triples exceed the limit of {}", kb.num_triples(), spec.max_triples)));
    }
    Ok(World { domain_words, classes, relations, entities, homonym, kb })
}

/// Composition signature: the canonical form with entities and literals
/// masked.
pub fn signature(expr: &SExpr) -> String {
    fn mask(e: &SExpr) -> SExpr {
        match e {
            SExpr::Entity(_) => SExpr::entity("E"),
            SExpr::Literal(_) => SExpr::Literal(Value::int(0)),
            SExpr::Join(r, a) => SExpr::join(r.clone(), mask(a)),
            SExpr::And(a, b) => SExpr::and(mask(a), mask(b)),
            SExpr::Count(a) => SExpr::count(mask(a)),
            SExpr::ArgMin(a, r) => SExpr::argmin(mask(a), r.clone()),
            SExpr::ArgMax(a, r) => SExpr::argmax(mask(a), r.clone()),
            SExpr::Compare(op, r, _) => SExpr::Compare(*op, r.clone(), Value::int(0)),
            other => other.clone(),
        }
    }
    mask(expr).canonical().print()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Template {
    Inverse,
    Forward,
    Typed,
    ChainInverse,
    ChainForward,
    Pair,
    Superlative,
    Comparative,
}

const TEMPLATES: [(Template, u32); 8] = [
    (Template::Inverse, 6),
    (Template::Forward, 4),
    (Template::Typed, 4),
    (Template::ChainInverse, 3),
    (Template::ChainForward, 2),
    (Template::Pair, 3),
    (Template::Superlative, 3),
    (Template::Comparative, 3),
];

/// Question text with entity spans recorded as it is built.
#[derive(Default)]
struct Rendered {
    text: String,
    mentions: Vec<EntityMention>,
}

impl Rendered {
    fn word(&mut self, w: &str) -> &mut Self {
        if !self.text.is_empty() {
            self.text.push(' ');
        }
        self.text.push_str(w);
        self
    }

    fn entity(&mut self, e: &EntitySpec) -> &mut Self {
        if !self.text.is_empty() {
            self.text.push(' ');
        }
        let start = self.text.chars().count();
        self.text.push_str(&e.name);
        let end = self.text.chars().count();
        self.mentions.push(EntityMention { span: [start, end], surface: e.name.clone(), id: e.id.clone() });
        self
    }
}

struct Draft {
    expr: SExpr,
    answer: Denotation,
    question: Rendered,
}

struct Grounder<'a> {
    world: &'a World,
    rate: f64,
    by_class: Vec<Vec<usize>>,
}

impl<'a> Grounder<'a> {
    fn new(world: &'a World, rate: f64) -> Self {
        let mut by_class = vec![Vec::new(); world.classes.len()];
        for (i, e) in world.entities.iter().enumerate() {
            by_class[e.class].push(i);
        }
        Self { world, rate, by_class }
    }

    /// Chooses a mention entity: ambiguous with the configured rate, and
    /// then the less popular homonym half of the time.
    fn pick(&self, rng: &mut ChaCha8Rng, eligible: &[usize]) -> Option<usize> {
        if eligible.is_empty() {
            return None;
        }
        let ambiguous = rng.gen_bool(self.rate);
        let low = rng.gen_bool(0.5);
        let tiers: [Box<dyn Fn(&usize) -> bool>; 3] = if ambiguous {
            [
                Box::new(|i| self.world.homonym.get(i) == Some(&low)),
                Box::new(|i| self.world.homonym.contains_key(i)),
                Box::new(|_| true),
            ]
        } else {
            [Box::new(|i| !self.world.homonym.contains_key(i)), Box::new(|_| true), Box::new(|_| true)]
        };
        tiers.iter().find_map(|keep| {
            let pool: Vec<usize> = eligible.iter().copied().filter(|i| keep(i)).collect();
            pool.choose(rng).copied()
        })
    }

    fn phrase(&self, rng: &mut ChaCha8Rng, r: &RelationSpec) -> String {
        format!("{} {}", self.world.domain_words[r.domain], r.words.choose(rng).expect("two words"))
    }

    fn ent(&self, i: usize) -> SExpr {
        SExpr::Entity(self.world.entities[i].id.clone())
    }

    fn run(&self, expr: &SExpr) -> Option<Denotation> {
        execute(expr, &self.world.kb).ok().filter(|d| !d.is_empty())
    }

    fn entity_relations(&self) -> Vec<&'a RelationSpec> {
        self.world.relations.iter().filter(|r| r.object.is_some()).collect()
    }

    fn numeric_of(&self, class: usize) -> Vec<&'a RelationSpec> {
        self.world.relations.iter().filter(|r| r.object.is_none() && r.subject == class).collect()
    }

    fn draft(&self, rng: &mut ChaCha8Rng, t: Template) -> Option<Draft> {
        let w = self.world;
        let fwd = |r: &RelationSpec| RelationExpr::forward(r.id.as_str().into());
        let inv = |r: &RelationSpec| RelationExpr::inverse(r.id.as_str().into());
        let ent_rels = self.entity_relations();
        let mut q = Rendered::default();
        let (expr, answer) = match t {
            Template::Inverse => {
                let r = w.relations.choose(rng)?;
                let make = |e: usize| SExpr::join(inv(r), self.ent(e));
                let eligible: Vec<usize> = self.by_class[r.subject].iter().copied().filter(|&e| self.run(&make(e)).is_some()).collect();
                let e = self.pick(rng, &eligible)?;
                let phrase = self.phrase(rng, r);
                if rng.gen_bool(0.5) {
                    q.word("what").word("is").word("the").word(&phrase).word("of").entity(&w.entities[e]).word("?");
                } else {
                    q.word("tell").word("me").word("the").word(&phrase).word("of").entity(&w.entities[e]).word(".");
                }
                let x = make(e);
                let d = self.run(&x)?;
                (x, d)
            }
            Template::Forward | Template::Typed => {
                let r = *ent_rels.choose(rng)?;
                let typed = t == Template::Typed;
                let class = &w.classes[r.subject];
                let make = |e: usize| {
                    let j = SExpr::join(fwd(r), self.ent(e));
                    if typed {
                        SExpr::and(SExpr::Class(class.id.clone()), j)
                    } else {
                        j
                    }
                };
                let eligible: Vec<usize> =
                    self.by_class[r.object?].iter().copied().filter(|&e| self.run(&make(e)).is_some()).collect();
                let e = self.pick(rng, &eligible)?;
                let phrase = self.phrase(rng, r);
                match (typed, rng.gen_bool(0.5)) {
                    (false, true) => q.word("what").word("has").word(&phrase).entity(&w.entities[e]).word("?"),
                    (false, false) => q.word("which").word("things").word("have").entity(&w.entities[e]).word("as").word(&phrase).word("?"),
                    (true, true) => q.word("which").word(&class.word).word("has").word(&phrase).entity(&w.entities[e]).word("?"),
                    (true, false) => {
                        q.word("name").word("a").word(&class.word).word("whose").word(&phrase).word("is").entity(&w.entities[e]).word(".")
                    }
                };
                let x = make(e);
                let d = self.run(&x)?;
                (x, d)
            }
            Template::ChainInverse => {
                let r1 = *ent_rels.choose(rng)?;
                let nexts: Vec<&RelationSpec> = w.relations.iter().filter(|r| Some(r.subject) == r1.object).collect();
                let r2 = *nexts.choose(rng)?;
                let make = |e: usize| SExpr::join(inv(r2), SExpr::join(inv(r1), self.ent(e)));
                let eligible: Vec<usize> = self.by_class[r1.subject].iter().copied().filter(|&e| self.run(&make(e)).is_some()).collect();
                let e = self.pick(rng, &eligible)?;
                let (p1, p2) = (self.phrase(rng, r1), self.phrase(rng, r2));
                q.word("what").word("is").word("the").word(&p2).word("of").word("the").word(&p1).word("of").entity(&w.entities[e]).word("?");
                let x = make(e);
                let d = self.run(&x)?;
                (x, d)
            }
            Template::ChainForward => {
                let r1 = *ent_rels.choose(rng)?;
                let prevs: Vec<&RelationSpec> = ent_rels.iter().copied().filter(|r| r.object == Some(r1.subject)).collect();
                let r2 = *prevs.choose(rng)?;
                let make = |e: usize| SExpr::join(fwd(r2), SExpr::join(fwd(r1), self.ent(e)));
                let eligible: Vec<usize> =
                    self.by_class[r1.object?].iter().copied().filter(|&e| self.run(&make(e)).is_some()).collect();
                let e = self.pick(rng, &eligible)?;
                let (p1, p2) = (self.phrase(rng, r1), self.phrase(rng, r2));
                q.word("what").word("has").word(&p2).word("something").word("that").word("has").word(&p1).entity(&w.entities[e]).word("?");
                let x = make(e);
                let d = self.run(&x)?;
                (x, d)
            }
            Template::Pair => {
                let r1 = *ent_rels.choose(rng)?;
                let seconds: Vec<&RelationSpec> =
                    ent_rels.iter().copied().filter(|r| r.subject == r1.subject && r.id != r1.id).collect();
                let r2 = *seconds.choose(rng)?;
                let one = |e: usize| SExpr::join(fwd(r1), self.ent(e));
                let two = |e: usize| SExpr::join(fwd(r2), self.ent(e));
                let partners = |e1: usize| -> Vec<usize> {
                    self.by_class[r2.object.expect("entity relation")]
                        .iter()
                        .copied()
                        .filter(|&e2| e2 != e1 && self.run(&SExpr::and(one(e1), two(e2))).is_some())
                        .collect()
                };
                let eligible: Vec<usize> =
                    self.by_class[r1.object?].iter().copied().filter(|&e| !partners(e).is_empty()).collect();
                let e1 = self.pick(rng, &eligible)?;
                let e2 = self.pick(rng, &partners(e1))?;
                let (p1, p2) = (self.phrase(rng, r1), self.phrase(rng, r2));
                q.word("what").word("has").word(&p1).entity(&w.entities[e1]).word("and").word(&p2).entity(&w.entities[e2]).word("?");
                let x = SExpr::and(one(e1), two(e2)).canonical();
                let d = self.run(&x)?;
                (x, d)
            }
            Template::Superlative => {
                let r = *ent_rels.choose(rng)?;
                let n = *self.numeric_of(r.subject).choose(rng)?;
                let class = &w.classes[r.subject];
                let max = rng.gen_bool(0.5);
                let make = |e: usize| {
                    let set = SExpr::and(SExpr::Class(class.id.clone()), SExpr::join(fwd(r), self.ent(e)));
                    if max {
                        SExpr::argmax(set, fwd(n))
                    } else {
                        SExpr::argmin(set, fwd(n))
                    }
                };
                let strict = |e: usize| {
                    let base = SExpr::and(SExpr::Class(class.id.clone()), SExpr::join(fwd(r), self.ent(e)));
                    match (self.run(&base), self.run(&make(e))) {
                        (Some(all), Some(best)) => all.len() >= 2 && best.len() < all.len(),
                        _ => false,
                    }
                };
                let eligible: Vec<usize> = self.by_class[r.object?].iter().copied().filter(|&e| strict(e)).collect();
                let e = self.pick(rng, &eligible)?;
                let (p, pn) = (self.phrase(rng, r), self.phrase(rng, n));
                q.word("which").word(&class.word).word("with").word(&p).entity(&w.entities[e]).word("has").word("the");
                q.word(if max { "largest" } else { "smallest" }).word(&pn).word("?");
                let x = make(e);
                let d = self.run(&x)?;
                (x, d)
            }
            Template::Comparative => {
                let r = *ent_rels.choose(rng)?;
                let n = *self.numeric_of(r.subject).choose(rng)?;
                let values = |e: usize| -> Vec<i64> {
                    let set = execute(&SExpr::join(fwd(r), self.ent(e)), &w.kb).map(|d| d.as_set()).unwrap_or_default();
                    let mut vs: Vec<i64> = set
                        .iter()
                        .filter_map(|s| s.as_entity())
                        .flat_map(|s| w.kb.objects_of(s.as_str(), &n.id).iter())
                        .filter_map(|v| v.ordinal())
                        .filter_map(|o| match o {
                            crate::kb::Ordinal::Number(x) => Some(x as i64),
                            _ => None,
                        })
                        .collect();
                    vs.sort_unstable();
                    vs.dedup();
                    vs
                };
                let eligible: Vec<usize> = self.by_class[r.object?].iter().copied().filter(|&e| values(e).len() >= 2).collect();
                let e = self.pick(rng, &eligible)?;
                let vs = values(e);
                let op = *CompareOp::ALL.choose(rng)?;
                // Thresholds that keep the answer a non-empty strict subset.
                let choices = match op {
                    CompareOp::Lt | CompareOp::Ge => &vs[1..],
                    CompareOp::Gt | CompareOp::Le => &vs[..vs.len() - 1],
                };
                let threshold = *choices.choose(rng)?;
                let x = SExpr::and(SExpr::join(fwd(r), self.ent(e)), SExpr::Compare(op, fwd(n), Value::int(threshold))).canonical();
                let (p, pn) = (self.phrase(rng, r), self.phrase(rng, n));
                q.word("what").word("has").word(&p).entity(&w.entities[e]).word("and").word(&pn);
                let words: &[&str] = match op {
                    CompareOp::Lt => &["less", "than"],
                    CompareOp::Le => &["at", "most"],
                    CompareOp::Gt => &["more", "than"],
                    CompareOp::Ge => &["at", "least"],
                };
                for wd in words {
                    q.word(wd);
                }
                q.word(&threshold.to_string()).word("?");
                let d = self.run(&x)?;
                (x, d)
            }
        };
        Some(Draft { expr, answer, question: q })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusMeta {
    pub spec: SchemaSpec,
    pub seed: u64,
    /// Relations and classes kept out of training.
    pub reserved: Vec<String>,
    /// Composition signatures kept out of training.
    pub held_out_signatures: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub kb: KnowledgeBase,
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
    pub test: Vec<Example>,
    pub meta: CorpusMeta,
}

fn weighted_template(rng: &mut ChaCha8Rng, allowed: &[(Template, u32)]) -> Template {
    allowed.choose_weighted(rng, |(_, w)| *w).expect("non-empty template list").0
}

fn reserve_items(world: &World, frac: f64, rng: &mut ChaCha8Rng) -> BTreeSet<String> {
    let mut reserved = BTreeSet::new();
    if frac == 0.0 {
        return reserved;
    }
    let n_rel = (frac * world.relations.len() as f64).floor() as usize;
    let n_cls = (frac * world.classes.len() as f64).floor() as usize;
    // Prefer relations whose attribute word is also used by another relation.
    let mut word_uses: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &world.relations {
        *word_uses.entry(r.words[0].as_str()).or_default() += 1;
    }
    let mut rels: Vec<&RelationSpec> = world.relations.iter().collect();
    rels.shuffle(rng);
    rels.sort_by_key(|r| word_uses[r.words[0].as_str()] < 2);
    for r in rels.iter().take(n_rel) {
        *word_uses.get_mut(r.words[0].as_str()).expect("counted") -= 1;
        reserved.insert(r.id.clone());
    }
    let mut classes: Vec<&ClassSpec> = world.classes.iter().collect();
    classes.shuffle(rng);
    let n_cls = if n_rel == 0 && n_cls == 0 { 1 } else { n_cls };
    for c in classes.iter().take(n_cls) {
        reserved.insert(c.id.clone());
    }
    reserved
}

struct Item {
    expr: SExpr,
    question: String,
    mentions: Vec<EntityMention>,
    answers: Vec<String>,
    signature: String,
    items: BTreeSet<String>,
}

fn to_example(item: &Item, id: String, level: Level) -> Example {
    Example {
        id,
        question: item.question.clone(),
        s_expression: item.expr.print(),
        answers: item.answers.clone(),
        entities: item.mentions.clone(),
        level,
    }
}

/// Builds a KB and train/dev/test splits. A pure function of the spec and
/// seed.
pub fn generate_corpus(spec: &SchemaSpec, seed: u64) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let world = build_world(spec, &mut rng)?;
    let reserved = reserve_items(&world, spec.zero_shot_fraction, &mut rng);
    let grounder = Grounder::new(&world, spec.ambiguity_rate);
    let [n_iid, n_comp, n_zero] = spec.test_counts();
    let iid_needed = spec.train + spec.dev + n_iid;
    let allowed: Vec<(Template, u32)> = TEMPLATES
        .iter()
        .copied()
        .filter(|(t, _)| spec.numeric_per_class > 0 || !matches!(t, Template::Superlative | Template::Comparative))
        .collect();

    // Raw pool, one question per distinct gold form.
    let mut seen = BTreeSet::new();
    let mut open: Vec<Item> = Vec::new();
    let mut zero: Vec<Item> = Vec::new();
    let attempts = 60 * (spec.train + spec.dev + spec.test) + 2000;
    for _ in 0..attempts {
        if open.len() >= 2 * (iid_needed + n_comp) + 50 && zero.len() >= 2 * n_zero {
            break;
        }
        let t = weighted_template(&mut rng, &allowed);
        let Some(d) = grounder.draft(&mut rng, t) else { continue };
        if !seen.insert(d.expr.print()) {
            continue;
        }
        let items = d.expr.schema_items();
        let item = Item {
            signature: signature(&d.expr),
            answers: d.answer.answer_strings(),
            question: d.question.text,
            mentions: d.question.mentions,
            expr: d.expr,
            items,
        };
        if item.items.iter().any(|i| reserved.contains(i)) {
            zero.push(item);
        } else {
            open.push(item);
        }
    }

    // Hold out composite signatures while every item they use stays covered.
    let mut sig_items: BTreeMap<&str, &BTreeSet<String>> = BTreeMap::new();
    let mut sig_count: BTreeMap<&str, usize> = BTreeMap::new();
    for it in &open {
        sig_items.insert(&it.signature, &it.items);
        *sig_count.entry(&it.signature).or_default() += 1;
    }
    let mut support: BTreeMap<&str, usize> = BTreeMap::new();
    for items in sig_items.values() {
        for i in items.iter() {
            *support.entry(i.as_str()).or_default() += 1;
        }
    }
    let mut composite: Vec<&str> = open
        .iter()
        .filter(|it| !matches!(&it.expr, SExpr::Join(_, a) if matches!(**a, SExpr::Entity(_))))
        .map(|it| it.signature.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    composite.shuffle(&mut rng);
    let mut held: BTreeSet<String> = BTreeSet::new();
    let mut held_examples = 0;
    for sig in composite {
        if held_examples >= 2 * n_comp {
            break;
        }
        let items = sig_items[sig];
        if items.iter().all(|i| support[i.as_str()] >= 2) && open.len() - held_examples - sig_count[sig] >= iid_needed {
            for i in items.iter() {
                *support.get_mut(i.as_str()).expect("counted") -= 1;
            }
            held.insert(sig.to_string());
            held_examples += sig_count[sig];
        }
    }
    let (comp_pool, mut iid_pool): (Vec<Item>, Vec<Item>) = open.into_iter().partition(|it| held.contains(&it.signature));
    iid_pool.shuffle(&mut rng);
    let short = |what: &str, have: usize, need: usize| {
        Err(Error::Invalid(format!("infeasible spec: only {have} {what} questions available, {need} needed")))
    };
    if iid_pool.len() < iid_needed {
        return short("i.i.d.", iid_pool.len(), iid_needed);
    }
    let rest = iid_pool.split_off(spec.train);
    let train_items = iid_pool;
    let train_sigs: BTreeSet<&str> = train_items.iter().map(|i| i.signature.as_str()).collect();
    let train_schema: BTreeSet<&str> = train_items.iter().flat_map(|i| i.items.iter().map(String::as_str)).collect();
    let in_train_dist: Vec<&Item> = rest.iter().filter(|i| train_sigs.contains(i.signature.as_str())).collect();
    if in_train_dist.len() < spec.dev + n_iid {
        return short("held-in i.i.d.", in_train_dist.len(), spec.dev + n_iid);
    }
    let comp: Vec<&Item> =
        comp_pool.iter().filter(|i| i.items.iter().all(|x| train_schema.contains(x.as_str()))).collect();
    if comp.len() < n_comp {
        return short("compositional", comp.len(), n_comp);
    }
    if zero.len() < n_zero {
        return short("zero-shot", zero.len(), n_zero);
    }
    let mut zero_refs: Vec<&Item> = zero.iter().collect();
    zero_refs.shuffle(&mut rng);
    let mut comp = comp;
    comp.shuffle(&mut rng);

    let train: Vec<Example> =
        train_items.iter().enumerate().map(|(i, it)| to_example(it, format!("train-{i:05}"), Level::Iid)).collect();
    let dev: Vec<Example> = in_train_dist[..spec.dev]
        .iter()
        .enumerate()
        .map(|(i, it)| to_example(it, format!("dev-{i:05}"), Level::Iid))
        .collect();
    let mut tagged: Vec<(&Item, Level)> = in_train_dist[spec.dev..spec.dev + n_iid].iter().map(|&i| (i, Level::Iid)).collect();
    tagged.extend(comp[..n_comp].iter().map(|&i| (i, Level::Compositional)));
    tagged.extend(zero_refs[..n_zero].iter().map(|&i| (i, Level::ZeroShot)));
    tagged.shuffle(&mut rng);
    let test: Vec<Example> =
        tagged.iter().enumerate().map(|(i, (it, level))| to_example(it, format!("test-{i:05}"), *level)).collect();

    Ok(Corpus {
        kb: world.kb,
        train,
        dev,
        test,
        meta: CorpusMeta { spec: spec.clone(), seed, reserved: reserved.into_iter().collect(), held_out_signatures: held.into_iter().collect() },
    })
}

impl Corpus {
    pub fn split(&self, name: &str) -> Option<&[Example]> {
        match name {
            "train" => Some(&self.train),
            "dev" => Some(&self.dev),
            "test" => Some(&self.test),
            _ => None,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::Io(dir.display().to_string(), e))?;
        let (triples, aliases) = self.kb.to_files();
        let put = |name: &str, text: &str| {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::Io(p.display().to_string(), e))
        };
        put(TRIPLES_FILE, &triples)?;
        put(ALIASES_FILE, &aliases)?;
        let meta = serde_json::to_string_pretty(&self.meta).map_err(|e| Error::Json(META_FILE.into(), e))?;
        put(META_FILE, &(meta + "\n"))?;
        for name in SPLITS {
            write_jsonl(&dir.join(format!("{name}.jsonl")), self.split(name).expect("known split"))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let kb = KnowledgeBase::load(&dir.join(TRIPLES_FILE), &dir.join(ALIASES_FILE))?;
        let read = |name: &str| {
            let p = dir.join(name);
            fs::read_to_string(&p).map_err(|e| Error::Io(p.display().to_string(), e))
        };
        let meta: CorpusMeta = serde_json::from_str(&read(META_FILE)?).map_err(|e| Error::Json(META_FILE.into(), e))?;
        let split = |name: &str| -> Result<Vec<Example>> {
            let file = format!("{name}.jsonl");
            parse_jsonl(&read(&file)?, &dir.join(&file).display().to_string())
        };
        Ok(Self { kb, train: split("train")?, dev: split("dev")?, test: split("test")?, meta })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub examples: usize,
    /// Training questions that use a reserved item.
    pub leakage: Vec<String>,
    /// Test or dev questions whose level does not match the split policy.
    pub level_violations: Vec<String>,
    /// Unparseable golds, answer mismatches and bad mentions.
    pub invariant_violations: Vec<String>,
    pub mentions: usize,
    pub ambiguous_mentions: usize,
    pub ambiguity_rate: f64,
}

impl VerifyReport {
    pub fn violations(&self) -> usize {
        self.leakage.len() + self.level_violations.len() + self.invariant_violations.len()
    }

    pub fn is_clean(&self) -> bool {
        self.violations() == 0
    }
}

/// Re-checks every example and the split policy.
pub fn verify_corpus(corpus: &Corpus) -> VerifyReport {
    let kb = &corpus.kb;
    let reserved: BTreeSet<&str> = corpus.meta.reserved.iter().map(String::as_str).collect();
    let mut report = VerifyReport::default();
    let mut parsed: BTreeMap<String, SExpr> = BTreeMap::new();
    for name in SPLITS {
        for ex in corpus.split(name).expect("known split") {
            report.examples += 1;
            let chars: Vec<char> = ex.question.chars().collect();
            for m in &ex.entities {
                report.mentions += 1;
                let matches = kb.aliases(&m.surface.to_lowercase());
                if matches.len() >= 2 {
                    report.ambiguous_mentions += 1;
                }
                let [s, e] = m.span;
                let text: Option<String> = (s <= e && e <= chars.len()).then(|| chars[s..e].iter().collect());
                if text.as_deref() != Some(m.surface.as_str()) {
                    report.invariant_violations.push(format!("{}: mention {:?} does not match its span", ex.id, m.surface));
                }
                if !matches.iter().any(|a| a.entity == m.id) {
                    report.invariant_violations.push(format!("{}: {:?} is not an alias of {}", ex.id, m.surface, m.id));
                }
            }
            let expr = match ex.gold_expr(kb) {
                Ok(e) => e,
                Err(err) => {
                    report.invariant_violations.push(format!("{}: gold does not parse: {err}", ex.id));
                    continue;
                }
            };
            let gold_entities: BTreeSet<&EntityId> = ex.entities.iter().map(|m| &m.id).collect();
            if expr.entities().iter().any(|e| !gold_entities.contains(e)) {
                report.invariant_violations.push(format!("{}: gold entity without a mention", ex.id));
            }
            match execute(&expr, kb) {
                Ok(d) => {
                    let got: BTreeSet<String> = d.answer_strings().into_iter().collect();
                    let want: BTreeSet<String> = ex.answers.iter().cloned().collect();
                    if got != want {
                        report.invariant_violations.push(format!("{}: answers differ from execution", ex.id));
                    }
                }
                Err(err) => report.invariant_violations.push(format!("{}: gold does not execute: {err}", ex.id)),
            }
            if name == "train" && expr.schema_items().iter().any(|i| reserved.contains(i.as_str())) {
                report.leakage.push(format!("{}: uses a reserved schema item", ex.id));
            }
            parsed.insert(ex.id.clone(), expr);
        }
    }
    let train_sigs: BTreeSet<String> =
        corpus.train.iter().filter_map(|e| parsed.get(&e.id)).map(signature).collect();
    let train_items: BTreeSet<String> =
        corpus.train.iter().filter_map(|e| parsed.get(&e.id)).flat_map(|e| e.schema_items()).collect();
    for ex in corpus.dev.iter().chain(&corpus.test) {
        let Some(expr) = parsed.get(&ex.id) else { continue };
        let items = expr.schema_items();
        let all_seen = items.iter().all(|i| train_items.contains(i));
        let sig_seen = train_sigs.contains(&signature(expr));
        let ok = match ex.level {
            Level::Iid => all_seen && sig_seen,
            Level::Compositional => all_seen && !sig_seen,
            Level::ZeroShot => !all_seen,
        };
        if !ok {
            report.level_violations.push(format!("{}: not a valid {} question", ex.id, ex.level.name()));
        }
    }
    report.ambiguity_rate = if report.mentions == 0 { 0.0 } else { report.ambiguous_mentions as f64 / report.mentions as f64 };
    report
}
