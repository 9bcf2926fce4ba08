//! Immutable in-memory triple store.
//!
//! Triples file: `subject<TAB>relation<TAB>object`, `#` lines ignored.
//! Object tokens containing `^^` are literals (`raw^^kind`), tokens with the
//! `class:` prefix are classes, everything else is an entity. Class
//! membership is expressed with the reserved type relation (default `type`).
//!
//! Alias file: `surface<TAB>entity[<TAB>popularity]`; a missing popularity
//! is 0.

use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::sexpr::RelationExpr;

pub const DEFAULT_TYPE_RELATION: &str = "type";
pub const CLASS_PREFIX: &str = "class:";

#[derive(Debug, thiserror::Error)]
pub enum KbError {
    #[error("{file}:{line}: {msg}")]
    Malformed { file: String, line: usize, msg: String },
    #[error("{file}:{line}: duplicate alias ({surface}, {entity})")]
    DuplicateAlias { file: String, line: usize, surface: String, entity: String },
    #[error("alias for unknown entity {0}")]
    UnknownAliasEntity(String),
    #[error("invalid literal {raw:?} of kind {kind}: {msg}")]
    Literal { raw: String, kind: String, msg: String },
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }
    };
}

string_id!(EntityId);
string_id!(RelationId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LiteralKind {
    Int,
    Float,
    Date,
    String,
}

impl LiteralKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Int => "int",
            Self::Float => "float",
            Self::Date => "date",
            Self::String => "string",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "int" => Some(Self::Int),
            "float" => Some(Self::Float),
            "date" => Some(Self::Date),
            "string" => Some(Self::String),
            _ => None,
        }
    }
}

/// Totally ordered key for literals that support `<`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ordinal {
    Number(f64),
    Date(i64, u32, u32),
}

impl Ordinal {
    /// `None` when the two keys are not of the same comparable family.
    pub fn compare(&self, other: &Ordinal) -> Option<std::cmp::Ordering> {
        match (self, other) {
            (Ordinal::Number(a), Ordinal::Number(b)) => Some(a.total_cmp(b)),
            (Ordinal::Date(y1, m1, d1), Ordinal::Date(y2, m2, d2)) => Some((y1, m1, d1).cmp(&(y2, m2, d2))),
            _ => None,
        }
    }

    pub fn same_family(&self, other: &Ordinal) -> bool {
        self.compare(other).is_some()
    }
}

fn parse_date(raw: &str) -> Option<(i64, u32, u32)> {
    let parts: Vec<&str> = raw.split('-').collect();
    if parts.is_empty() || parts.len() > 3 || parts.iter().any(|p| p.is_empty() || !p.bytes().all(|b| b.is_ascii_digit())) {
        return None;
    }
    let y: i64 = parts[0].parse().ok()?;
    let m: u32 = parts.get(1).map_or(Some(0), |p| p.parse().ok())?;
    let d: u32 = parts.get(2).map_or(Some(0), |p| p.parse().ok())?;
    if parts.len() >= 2 && !(1..=12).contains(&m) {
        return None;
    }
    if parts.len() == 3 && !(1..=31).contains(&d) {
        return None;
    }
    Some((y, m, d))
}

/// Object of a triple or atom of a logical form. Literal spelling is
/// canonicalized on construction, so derived equality is value equality
/// within a kind.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Value {
    Entity(EntityId),
    Class(String),
    Literal { kind: LiteralKind, raw: String },
}

impl Value {
    pub fn entity(id: impl Into<String>) -> Self {
        Value::Entity(EntityId(id.into()))
    }

    pub fn class(name: impl Into<String>) -> Self {
        Value::Class(name.into())
    }

    pub fn literal(kind: LiteralKind, raw: &str) -> Result<Self, KbError> {
        let err = |msg: &str| KbError::Literal { raw: raw.to_string(), kind: kind.name().into(), msg: msg.into() };
        if raw.is_empty() || raw.chars().any(|c| c.is_whitespace() || c == '(' || c == ')') || raw.contains("^^") {
            return Err(err("empty or contains whitespace, parentheses or ^^"));
        }
        let canonical = match kind {
            LiteralKind::Int => raw.parse::<i64>().map_err(|_| err("not an integer"))?.to_string(),
            LiteralKind::Float => {
                let f: f64 = raw.parse().map_err(|_| err("not a float"))?;
                if !f.is_finite() {
                    return Err(err("not finite"));
                }
                format!("{}", if f == 0.0 { 0.0 } else { f })
            }
            LiteralKind::Date => {
                let parts = raw.split('-').count();
                let (y, m, d) = parse_date(raw).ok_or_else(|| err("expected YYYY, YYYY-MM or YYYY-MM-DD"))?;
                match parts {
                    1 => format!("{y:04}"),
                    2 => format!("{y:04}-{m:02}"),
                    _ => format!("{y:04}-{m:02}-{d:02}"),
                }
            }
            LiteralKind::String => raw.to_string(),
        };
        Ok(Value::Literal { kind, raw: canonical })
    }

    pub fn int(v: i64) -> Self {
        Value::Literal { kind: LiteralKind::Int, raw: v.to_string() }
    }

    /// Parses a triples-file / s-expression object token.
    pub fn from_token(token: &str) -> Result<Self, KbError> {
        if let Some(pos) = token.rfind("^^") {
            let (raw, kind) = (&token[..pos], &token[pos + 2..]);
            let kind = LiteralKind::parse(kind).ok_or_else(|| KbError::Literal {
                raw: raw.into(),
                kind: kind.into(),
                msg: "unknown literal kind".into(),
            })?;
            return Value::literal(kind, raw);
        }
        if let Some(c) = token.strip_prefix(CLASS_PREFIX) {
            return Ok(Value::Class(c.to_string()));
        }
        Ok(Value::Entity(EntityId(token.to_string())))
    }

    pub fn to_token(&self) -> String {
        match self {
            Value::Entity(e) => e.0.clone(),
            Value::Class(c) => format!("{CLASS_PREFIX}{c}"),
            Value::Literal { kind, raw } => format!("{raw}^^{}", kind.name()),
        }
    }

    /// Answer-string form used in datasets: entity ids and class names
    /// bare, literals as `raw^^kind`.
    pub fn answer_string(&self) -> String {
        match self {
            Value::Entity(e) => e.0.clone(),
            Value::Class(c) => c.clone(),
            Value::Literal { .. } => self.to_token(),
        }
    }

    pub fn as_entity(&self) -> Option<&EntityId> {
        match self {
            Value::Entity(e) => Some(e),
            _ => None,
        }
    }

    pub fn ordinal(&self) -> Option<Ordinal> {
        match self {
            Value::Literal { kind: LiteralKind::Int | LiteralKind::Float, raw } => raw.parse().ok().map(Ordinal::Number),
            Value::Literal { kind: LiteralKind::Date, raw } => parse_date(raw).map(|(y, m, d)| Ordinal::Date(y, m, d)),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_token())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub subject: EntityId,
    pub relation: RelationId,
    pub object: Value,
}

/// Which kinds of object a relation reaches anywhere in the KB.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RangeKinds {
    pub entity: bool,
    pub class: bool,
    pub number: bool,
    pub date: bool,
    pub string: bool,
}

impl RangeKinds {
    fn record(&mut self, v: &Value) {
        match v {
            Value::Entity(_) => self.entity = true,
            Value::Class(_) => self.class = true,
            Value::Literal { kind: LiteralKind::Int | LiteralKind::Float, .. } => self.number = true,
            Value::Literal { kind: LiteralKind::Date, .. } => self.date = true,
            Value::Literal { kind: LiteralKind::String, .. } => self.string = true,
        }
    }

    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }

    /// All reached values are mutually comparable (vacuously for an empty range).
    pub fn is_ordinal(&self) -> bool {
        !self.entity && !self.class && !self.string && !(self.number && self.date)
    }

    /// Every reached value is comparable with `o`.
    pub fn comparable_with(&self, o: &Ordinal) -> bool {
        !self.entity
            && !self.class
            && !self.string
            && match o {
                Ordinal::Number(_) => !self.date,
                Ordinal::Date(..) => !self.number,
            }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alias {
    pub entity: EntityId,
    pub popularity: f64,
}

/// Accumulates triples and aliases, then freezes into a [`KnowledgeBase`].
#[derive(Debug, Clone)]
pub struct KbBuilder {
    type_relation: RelationId,
    triples: Vec<Triple>,
    aliases: Vec<(String, EntityId, f64)>,
}

impl Default for KbBuilder {
    fn default() -> Self {
        Self { type_relation: RelationId::from(DEFAULT_TYPE_RELATION), triples: Vec::new(), aliases: Vec::new() }
    }
}

impl KbBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn type_relation(mut self, rel: &str) -> Self {
        self.type_relation = RelationId::from(rel);
        self
    }

    pub fn triple(&mut self, s: &str, r: &str, o: Value) -> &mut Self {
        self.triples.push(Triple { subject: EntityId::from(s), relation: RelationId::from(r), object: o });
        self
    }

    pub fn typed(&mut self, e: &str, class: &str) -> &mut Self {
        let r = self.type_relation.0.clone();
        self.triple(e, &r, Value::class(class))
    }

    pub fn alias(&mut self, surface: &str, entity: &str, popularity: f64) -> &mut Self {
        self.aliases.push((surface.to_string(), EntityId::from(entity), popularity));
        self
    }

    pub fn build(self) -> Result<KnowledgeBase, KbError> {
        let mut kb = KnowledgeBase { type_relation: self.type_relation, ..KnowledgeBase::default() };
        for t in self.triples {
            kb.index(t);
        }
        for (line, (surface, entity, pop)) in self.aliases.into_iter().enumerate() {
            kb.add_alias("<builder>", line + 1, &surface, entity, pop)?;
        }
        Ok(kb)
    }
}

#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    type_relation: RelationId,
    triples: Vec<Triple>,
    entities: BTreeSet<EntityId>,
    relations: BTreeSet<RelationId>,
    classes: BTreeSet<String>,
    forward: HashMap<EntityId, HashMap<RelationId, BTreeSet<Value>>>,
    inverse: HashMap<RelationId, HashMap<Value, BTreeSet<EntityId>>>,
    object_relations: HashMap<Value, BTreeSet<RelationId>>,
    members: HashMap<String, BTreeSet<EntityId>>,
    ranges: HashMap<RelationId, RangeKinds>,
    entity_classes: HashMap<EntityId, BTreeSet<String>>,
    aliases: BTreeMap<String, Vec<Alias>>,
}

static EMPTY_VALUES: BTreeSet<Value> = BTreeSet::new();
static EMPTY_ENTITIES: BTreeSet<EntityId> = BTreeSet::new();

impl KnowledgeBase {
    pub fn builder() -> KbBuilder {
        KbBuilder::new()
    }

    fn index(&mut self, t: Triple) {
        self.entities.insert(t.subject.clone());
        if let Value::Entity(e) = &t.object {
            self.entities.insert(e.clone());
        }
        self.relations.insert(t.relation.clone());
        self.ranges.entry(t.relation.clone()).or_default().record(&t.object);
        if t.relation == self.type_relation {
            if let Value::Class(c) = &t.object {
                self.classes.insert(c.clone());
                self.members.entry(c.clone()).or_default().insert(t.subject.clone());
                self.entity_classes.entry(t.subject.clone()).or_default().insert(c.clone());
            }
        }
        self.forward
            .entry(t.subject.clone())
            .or_default()
            .entry(t.relation.clone())
            .or_default()
            .insert(t.object.clone());
        self.inverse
            .entry(t.relation.clone())
            .or_default()
            .entry(t.object.clone())
            .or_default()
            .insert(t.subject.clone());
        self.object_relations.entry(t.object.clone()).or_default().insert(t.relation.clone());
        self.triples.push(t);
    }

    fn add_alias(&mut self, file: &str, line: usize, surface: &str, entity: EntityId, pop: f64) -> Result<(), KbError> {
        if !(pop.is_finite() && pop >= 0.0) {
            return Err(KbError::Malformed { file: file.into(), line, msg: format!("popularity {pop} must be >= 0") });
        }
        if !self.entities.contains(&entity) {
            return Err(KbError::UnknownAliasEntity(entity.0));
        }
        let key = surface.trim().to_lowercase();
        if key.is_empty() {
            return Err(KbError::Malformed { file: file.into(), line, msg: "empty surface form".into() });
        }
        let list = self.aliases.entry(key.clone()).or_default();
        if list.iter().any(|a| a.entity == entity) {
            return Err(KbError::DuplicateAlias { file: file.into(), line, surface: key, entity: entity.0 });
        }
        list.push(Alias { entity, popularity: pop });
        Ok(())
    }

    /// Loads a triples file and an alias file.
    pub fn load(triples_path: &Path, aliases_path: &Path) -> Result<Self, KbError> {
        Self::load_with(triples_path, aliases_path, DEFAULT_TYPE_RELATION)
    }

    pub fn load_with(triples_path: &Path, aliases_path: &Path, type_relation: &str) -> Result<Self, KbError> {
        let read = |p: &Path| fs::read_to_string(p).map_err(|e| KbError::Io(p.display().to_string(), e));
        let triples = read(triples_path)?;
        let aliases = read(aliases_path)?;
        Self::parse(&triples, &aliases, type_relation, &triples_path.display().to_string(), &aliases_path.display().to_string())
    }

    pub fn parse(triples: &str, aliases: &str, type_relation: &str, triples_name: &str, aliases_name: &str) -> Result<Self, KbError> {
        let mut kb = KnowledgeBase { type_relation: RelationId::from(type_relation), ..Default::default() };
        for (i, line) in triples.lines().enumerate() {
            let line_no = i + 1;
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let malformed = |msg: String| KbError::Malformed { file: triples_name.into(), line: line_no, msg };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
                return Err(malformed(format!("expected 3 non-empty tab-separated fields, got {}", fields.len())));
            }
            if fields[0].contains("^^") || fields[0].starts_with(CLASS_PREFIX) {
                return Err(malformed(format!("subject {:?} must be an entity", fields[0])));
            }
            let object = Value::from_token(fields[2]).map_err(|e| malformed(e.to_string()))?;
            kb.index(Triple { subject: EntityId::from(fields[0]), relation: RelationId::from(fields[1]), object });
        }
        for (i, line) in aliases.lines().enumerate() {
            let line_no = i + 1;
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let malformed = |msg: String| KbError::Malformed { file: aliases_name.into(), line: line_no, msg };
            if !(2..=3).contains(&fields.len()) {
                return Err(malformed(format!("expected 2 or 3 tab-separated fields, got {}", fields.len())));
            }
            let pop = match fields.get(2) {
                Some(p) => p.trim().parse::<f64>().map_err(|_| malformed(format!("bad popularity {p:?}")))?,
                None => 0.0,
            };
            kb.add_alias(aliases_name, line_no, fields[0], EntityId::from(fields[1]), pop)?;
        }
        Ok(kb)
    }

    /// Serializes back to the two file formats.
    pub fn to_files(&self) -> (String, String) {
        let mut t = String::new();
        for tr in &self.triples {
            t.push_str(&format!("{}\t{}\t{}\n", tr.subject, tr.relation, tr.object.to_token()));
        }
        let mut a = String::new();
        for (surface, list) in &self.aliases {
            for al in list {
                a.push_str(&format!("{surface}\t{}\t{}\n", al.entity, al.popularity));
            }
        }
        (t, a)
    }

    pub fn type_relation(&self) -> &RelationId {
        &self.type_relation
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn num_triples(&self) -> usize {
        self.triples.len()
    }

    pub fn entities(&self) -> &BTreeSet<EntityId> {
        &self.entities
    }

    pub fn relations(&self) -> &BTreeSet<RelationId> {
        &self.relations
    }

    pub fn classes(&self) -> &BTreeSet<String> {
        &self.classes
    }

    pub fn has_entity(&self, e: &str) -> bool {
        self.entities.contains(e)
    }

    pub fn has_relation(&self, r: &str) -> bool {
        self.relations.contains(r)
    }

    pub fn has_class(&self, c: &str) -> bool {
        self.classes.contains(c)
    }

    /// `{o | (subject, relation, o)}`.
    pub fn objects_of(&self, subject: &str, relation: &str) -> &BTreeSet<Value> {
        self.forward.get(subject).and_then(|m| m.get(relation)).unwrap_or(&EMPTY_VALUES)
    }

    /// `{s | (s, relation, object)}`.
    pub fn subjects_of(&self, relation: &str, object: &Value) -> &BTreeSet<EntityId> {
        self.inverse.get(relation).and_then(|m| m.get(object)).unwrap_or(&EMPTY_ENTITIES)
    }

    /// Relations leaving `entity` as plain, relations arriving at it as inverse.
    pub fn relations_of(&self, entity: &str) -> BTreeSet<RelationExpr> {
        let mut out = BTreeSet::new();
        if let Some(m) = self.forward.get(entity) {
            out.extend(m.keys().map(|r| RelationExpr::forward(r.clone())));
        }
        if let Some(rs) = self.object_relations.get(&Value::entity(entity)) {
            out.extend(rs.iter().map(|r| RelationExpr::inverse(r.clone())));
        }
        out
    }

    /// Relations whose subject is `entity`.
    pub fn outgoing(&self, entity: &str) -> impl Iterator<Item = (&RelationId, &BTreeSet<Value>)> {
        self.forward.get(entity).into_iter().flat_map(|m| m.iter())
    }

    /// Relations whose object is `value`.
    pub fn incoming(&self, value: &Value) -> impl Iterator<Item = &RelationId> {
        self.object_relations.get(value).into_iter().flat_map(|s| s.iter())
    }

    /// All `(subject, object)` pairs of a relation.
    pub fn edges(&self, relation: &str) -> impl Iterator<Item = (&EntityId, &Value)> {
        self.inverse
            .get(relation)
            .into_iter()
            .flat_map(|m| m.iter().flat_map(|(o, subs)| subs.iter().map(move |s| (s, o))))
    }

    /// Object kinds of `relation`; the inverse direction always reaches entities.
    pub fn range_of(&self, relation: &RelationExpr) -> RangeKinds {
        match self.ranges.get(relation.relation.as_str()) {
            None => RangeKinds::default(),
            Some(_) if relation.inverse => RangeKinds { entity: true, ..Default::default() },
            Some(r) => *r,
        }
    }

    pub fn instances_of(&self, class: &str) -> &BTreeSet<EntityId> {
        self.members.get(class).unwrap_or(&EMPTY_ENTITIES)
    }

    pub fn classes_of(&self, entity: &str) -> impl Iterator<Item = &String> {
        self.entity_classes.get(entity).into_iter().flat_map(|s| s.iter())
    }

    /// Alias matches for a lowercase surface form, in file order.
    pub fn aliases(&self, surface: &str) -> &[Alias] {
        self.aliases.get(surface).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn alias_table(&self) -> &BTreeMap<String, Vec<Alias>> {
        &self.aliases
    }
}
