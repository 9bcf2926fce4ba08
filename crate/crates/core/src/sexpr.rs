//! Logical forms: AST, parser, canonical printer, KB checks and set
//! semantics.
//!
//! ```text
//! expr := atom | (JOIN rel expr) | (AND expr expr) | (COUNT expr)
//!       | (ARGMIN expr rel) | (ARGMAX expr rel) | (lt|le|gt|ge rel literal)
//! rel  := relation | (R relation)
//! ```

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::kb::{EntityId, KnowledgeBase, Ordinal, RelationId, Value};

pub const MAX_DEPTH: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationExpr {
    pub relation: RelationId,
    pub inverse: bool,
}

impl RelationExpr {
    pub fn forward(relation: RelationId) -> Self {
        Self { relation, inverse: false }
    }

    pub fn inverse(relation: RelationId) -> Self {
        Self { relation, inverse: true }
    }

    pub fn flipped(&self) -> Self {
        Self { relation: self.relation.clone(), inverse: !self.inverse }
    }
}

impl fmt::Display for RelationExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.inverse {
            write!(f, "(R {})", self.relation)
        } else {
            write!(f, "{}", self.relation)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CompareOp {
    Lt,
    Le,
    Gt,
    Ge,
}

impl CompareOp {
    pub const ALL: [CompareOp; 4] = [CompareOp::Lt, CompareOp::Le, CompareOp::Gt, CompareOp::Ge];

    pub fn name(self) -> &'static str {
        match self {
            Self::Lt => "lt",
            Self::Le => "le",
            Self::Gt => "gt",
            Self::Ge => "ge",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.name() == s)
    }

    pub fn holds(self, ord: Ordering) -> bool {
        match self {
            Self::Lt => ord == Ordering::Less,
            Self::Le => ord != Ordering::Greater,
            Self::Gt => ord == Ordering::Greater,
            Self::Ge => ord != Ordering::Less,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SExpr {
    Entity(EntityId),
    Class(String),
    /// Always holds a [`Value::Literal`].
    Literal(Value),
    Join(RelationExpr, Box<SExpr>),
    And(Box<SExpr>, Box<SExpr>),
    Count(Box<SExpr>),
    ArgMin(Box<SExpr>, RelationExpr),
    ArgMax(Box<SExpr>, RelationExpr),
    Compare(CompareOp, RelationExpr, Value),
}

impl SExpr {
    pub fn entity(id: &str) -> Self {
        SExpr::Entity(EntityId::from(id))
    }

    pub fn class(name: &str) -> Self {
        SExpr::Class(name.to_string())
    }

    pub fn join(rel: RelationExpr, arg: SExpr) -> Self {
        SExpr::Join(rel, Box::new(arg))
    }

    pub fn and(a: SExpr, b: SExpr) -> Self {
        SExpr::And(Box::new(a), Box::new(b))
    }

    pub fn count(a: SExpr) -> Self {
        SExpr::Count(Box::new(a))
    }

    pub fn argmin(a: SExpr, rel: RelationExpr) -> Self {
        SExpr::ArgMin(Box::new(a), rel)
    }

    pub fn argmax(a: SExpr, rel: RelationExpr) -> Self {
        SExpr::ArgMax(Box::new(a), rel)
    }

    /// Canonical single-space form.
    pub fn print(&self) -> String {
        self.to_string()
    }

    /// Parenthesis nesting depth of the printed form.
    pub fn depth(&self) -> usize {
        let rel = |r: &RelationExpr| usize::from(r.inverse);
        match self {
            SExpr::Entity(_) | SExpr::Class(_) | SExpr::Literal(_) => 0,
            SExpr::Join(r, a) => 1 + rel(r).max(a.depth()),
            SExpr::And(a, b) => 1 + a.depth().max(b.depth()),
            SExpr::Count(a) => 1 + a.depth(),
            SExpr::ArgMin(a, r) | SExpr::ArgMax(a, r) => 1 + rel(r).max(a.depth()),
            SExpr::Compare(_, r, _) => 1 + rel(r),
        }
    }

    pub fn contains_superlative_or_comparison(&self) -> bool {
        match self {
            SExpr::ArgMin(..) | SExpr::ArgMax(..) | SExpr::Compare(..) => true,
            SExpr::Join(_, a) | SExpr::Count(a) => a.contains_superlative_or_comparison(),
            SExpr::And(a, b) => a.contains_superlative_or_comparison() || b.contains_superlative_or_comparison(),
            _ => false,
        }
    }

    /// Entity atoms in left-to-right order.
    pub fn entities(&self) -> Vec<&EntityId> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let SExpr::Entity(id) = e {
                out.push(id);
            }
        });
        out
    }

    /// Relations and classes mentioned anywhere in the expression.
    pub fn schema_items(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| match e {
            SExpr::Class(c) => {
                out.insert(c.clone());
            }
            SExpr::Join(r, _) | SExpr::ArgMin(_, r) | SExpr::ArgMax(_, r) | SExpr::Compare(_, r, _) => {
                out.insert(r.relation.0.clone());
            }
            _ => {}
        });
        out
    }

    /// Pre-order traversal.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a SExpr)) {
        f(self);
        match self {
            SExpr::Join(_, a) | SExpr::Count(a) | SExpr::ArgMin(a, _) | SExpr::ArgMax(a, _) => a.visit(f),
            SExpr::And(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            _ => {}
        }
    }

    /// Sorts the operands of every AND by printed form.
    pub fn canonical(&self) -> SExpr {
        match self {
            SExpr::Join(r, a) => SExpr::join(r.clone(), a.canonical()),
            SExpr::And(a, b) => {
                let (a, b) = (a.canonical(), b.canonical());
                if b.print() < a.print() {
                    SExpr::and(b, a)
                } else {
                    SExpr::and(a, b)
                }
            }
            SExpr::Count(a) => SExpr::count(a.canonical()),
            SExpr::ArgMin(a, r) => SExpr::argmin(a.canonical(), r.clone()),
            SExpr::ArgMax(a, r) => SExpr::argmax(a.canonical(), r.clone()),
            other => other.clone(),
        }
    }
}

impl fmt::Display for SExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SExpr::Entity(e) => write!(f, "{e}"),
            SExpr::Class(c) => write!(f, "{c}"),
            SExpr::Literal(v) => write!(f, "{}", v.to_token()),
            SExpr::Join(r, a) => write!(f, "(JOIN {r} {a})"),
            SExpr::And(a, b) => write!(f, "(AND {a} {b})"),
            SExpr::Count(a) => write!(f, "(COUNT {a})"),
            SExpr::ArgMin(a, r) => write!(f, "(ARGMIN {a} {r})"),
            SExpr::ArgMax(a, r) => write!(f, "(ARGMAX {a} {r})"),
            SExpr::Compare(op, r, v) => write!(f, "({} {r} {})", op.name(), v.to_token()),
        }
    }
}

pub fn semantically_equal(a: &SExpr, b: &SExpr) -> bool {
    a == b || a.canonical() == b.canonical()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("parse error at offset {offset}: {message}")]
pub struct ParseError {
    /// Character offset into the input.
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok<'a> {
    Open,
    Close,
    Atom(&'a str),
    End,
}

/// How bare atoms in expression position are classified.
pub trait AtomResolver {
    fn is_class(&self, atom: &str) -> bool;
}

/// Without a KB: ids starting with `m.`/`g.` or lacking a dot are entities,
/// other dotted names are classes.
pub struct Heuristic;

impl AtomResolver for Heuristic {
    fn is_class(&self, atom: &str) -> bool {
        atom.contains('.') && !atom.starts_with("m.") && !atom.starts_with("g.")
    }
}

/// KB membership decides first; unknown atoms fall back to [`Heuristic`].
impl AtomResolver for KnowledgeBase {
    fn is_class(&self, atom: &str) -> bool {
        if self.has_class(atom) {
            return true;
        }
        if self.has_entity(atom) {
            return false;
        }
        Heuristic.is_class(atom)
    }
}

struct Parser<'a, R: AtomResolver + ?Sized> {
    text: &'a str,
    pos: usize,
    resolver: &'a R,
}

pub fn parse(text: &str) -> Result<SExpr, ParseError> {
    parse_with(text, &Heuristic)
}

pub fn parse_with<R: AtomResolver + ?Sized>(text: &str, resolver: &R) -> Result<SExpr, ParseError> {
    let mut p = Parser { text, pos: 0, resolver };
    let e = p.expr(0)?;
    match p.next() {
        (_, Tok::End) => Ok(e),
        (at, _) => Err(p.error(at, "trailing input after expression")),
    }
}

impl<'a, R: AtomResolver + ?Sized> Parser<'a, R> {
    fn error(&self, byte: usize, msg: impl Into<String>) -> ParseError {
        ParseError { offset: self.text[..byte].chars().count(), message: msg.into() }
    }

    fn next(&mut self) -> (usize, Tok<'a>) {
        let bytes = self.text.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        if start >= bytes.len() {
            return (start, Tok::End);
        }
        match bytes[start] {
            b'(' => {
                self.pos += 1;
                (start, Tok::Open)
            }
            b')' => {
                self.pos += 1;
                (start, Tok::Close)
            }
            _ => {
                while self.pos < bytes.len()
                    && !bytes[self.pos].is_ascii_whitespace()
                    && bytes[self.pos] != b'('
                    && bytes[self.pos] != b')'
                {
                    self.pos += 1;
                }
                (start, Tok::Atom(&self.text[start..self.pos]))
            }
        }
    }

    fn close(&mut self) -> Result<(), ParseError> {
        match self.next() {
            (_, Tok::Close) => Ok(()),
            (at, Tok::End) => Err(self.error(at, "unbalanced parentheses: expected ')' before end of input")),
            (at, _) => Err(self.error(at, "arity mismatch: expected ')'")),
        }
    }

    fn open_depth(&self, at: usize, depth: usize) -> Result<usize, ParseError> {
        if depth + 1 > MAX_DEPTH {
            return Err(self.error(at, format!("nesting deeper than {MAX_DEPTH}")));
        }
        Ok(depth + 1)
    }

    fn atom(&self, at: usize, a: &str) -> Result<SExpr, ParseError> {
        if a.contains("^^") {
            let v = Value::from_token(a).map_err(|e| self.error(at, e.to_string()))?;
            return Ok(SExpr::Literal(v));
        }
        if is_operator(a) {
            return Err(self.error(at, format!("operator {a} outside operator position")));
        }
        if self.resolver.is_class(a) {
            Ok(SExpr::Class(a.to_string()))
        } else {
            Ok(SExpr::Entity(EntityId::from(a)))
        }
    }

    fn expr(&mut self, depth: usize) -> Result<SExpr, ParseError> {
        match self.next() {
            (at, Tok::Atom(a)) => self.atom(at, a),
            (at, Tok::Open) => {
                let depth = self.open_depth(at, depth)?;
                let (op_at, op) = match self.next() {
                    (op_at, Tok::Atom(op)) => (op_at, op),
                    (op_at, Tok::End) => return Err(self.error(op_at, "unbalanced parentheses: unexpected end of input")),
                    (op_at, _) => return Err(self.error(op_at, "expected an operator")),
                };
                let e = match op {
                    "JOIN" => {
                        let r = self.relation(depth)?;
                        let a = self.expr(depth)?;
                        SExpr::join(r, a)
                    }
                    "AND" => {
                        let a = self.expr(depth)?;
                        let b = self.expr(depth)?;
                        SExpr::and(a, b)
                    }
                    "COUNT" => SExpr::count(self.expr(depth)?),
                    "ARGMIN" | "ARGMAX" => {
                        let a = self.expr(depth)?;
                        let r = self.relation(depth)?;
                        if op == "ARGMIN" {
                            SExpr::argmin(a, r)
                        } else {
                            SExpr::argmax(a, r)
                        }
                    }
                    _ => match CompareOp::parse(op) {
                        Some(cmp) => {
                            let r = self.relation(depth)?;
                            let (lit_at, lit) = self.next();
                            let v = match lit {
                                Tok::Atom(l) if l.contains("^^") => {
                                    Value::from_token(l).map_err(|e| self.error(lit_at, e.to_string()))?
                                }
                                Tok::End => return Err(self.error(lit_at, "unbalanced parentheses: unexpected end of input")),
                                _ => return Err(self.error(lit_at, "comparison needs a typed literal")),
                            };
                            SExpr::Compare(cmp, r, v)
                        }
                        None => return Err(self.error(op_at, format!("unknown operator {op:?}"))),
                    },
                };
                self.close()?;
                Ok(e)
            }
            (at, Tok::Close) => Err(self.error(at, "unbalanced parentheses: unexpected ')'")),
            (at, Tok::End) if depth > 0 => Err(self.error(at, "unbalanced parentheses: unexpected end of input")),
            (at, Tok::End) => Err(self.error(at, "unexpected end of input")),
        }
    }

    fn relation(&mut self, depth: usize) -> Result<RelationExpr, ParseError> {
        match self.next() {
            (at, Tok::Atom(a)) => {
                if is_operator(a) || a.contains("^^") {
                    return Err(self.error(at, format!("expected a relation, found {a:?}")));
                }
                Ok(RelationExpr::forward(RelationId::from(a)))
            }
            (at, Tok::Open) => {
                self.open_depth(at, depth)?;
                match self.next() {
                    (_, Tok::Atom("R")) => {}
                    (at, Tok::End) => return Err(self.error(at, "unbalanced parentheses: unexpected end of input")),
                    (at, _) => return Err(self.error(at, "expected (R relation)")),
                }
                let r = match self.next() {
                    (at, Tok::Atom(a)) if !is_operator(a) && !a.contains("^^") => {
                        let _ = at;
                        RelationId::from(a)
                    }
                    (at, Tok::End) => return Err(self.error(at, "unbalanced parentheses: unexpected end of input")),
                    (at, _) => return Err(self.error(at, "expected a relation name")),
                };
                self.close()?;
                Ok(RelationExpr::inverse(r))
            }
            (at, Tok::End) => Err(self.error(at, "unbalanced parentheses: unexpected end of input")),
            (at, Tok::Close) => Err(self.error(at, "arity mismatch: missing relation")),
        }
    }
}

fn is_operator(a: &str) -> bool {
    matches!(a, "JOIN" | "AND" | "COUNT" | "ARGMIN" | "ARGMAX" | "R") || CompareOp::parse(a).is_some()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Denotation {
    Values(BTreeSet<Value>),
    Number(i64),
}

impl Denotation {
    pub fn empty() -> Self {
        Denotation::Values(BTreeSet::new())
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Denotation::Values(s) if s.is_empty())
    }

    pub fn len(&self) -> usize {
        match self {
            Denotation::Values(s) => s.len(),
            Denotation::Number(_) => 1,
        }
    }

    /// Answer strings: a count becomes one integer literal.
    pub fn answer_strings(&self) -> Vec<String> {
        match self {
            Denotation::Values(s) => s.iter().map(Value::answer_string).collect(),
            Denotation::Number(n) => vec![Value::int(*n).answer_string()],
        }
    }

    /// Set view used for scoring.
    pub fn as_set(&self) -> BTreeSet<Value> {
        match self {
            Denotation::Values(s) => s.clone(),
            Denotation::Number(n) => BTreeSet::from([Value::int(*n)]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExecError {
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("{0} expects a set, got a number")]
    ExpectedSet(&'static str),
}

pub fn execute(expr: &SExpr, kb: &KnowledgeBase) -> Result<Denotation, ExecError> {
    match expr {
        SExpr::Count(a) => match execute(a, kb)? {
            Denotation::Values(s) => Ok(Denotation::Number(s.len() as i64)),
            Denotation::Number(_) => Err(ExecError::ExpectedSet("COUNT")),
        },
        _ => eval_set(expr, kb, "expression").map(Denotation::Values),
    }
}

fn eval_set(expr: &SExpr, kb: &KnowledgeBase, ctx: &'static str) -> Result<BTreeSet<Value>, ExecError> {
    Ok(match expr {
        SExpr::Entity(e) => BTreeSet::from([Value::Entity(e.clone())]),
        SExpr::Class(c) => kb.instances_of(c).iter().map(|e| Value::Entity(e.clone())).collect(),
        SExpr::Literal(v) => BTreeSet::from([v.clone()]),
        SExpr::Join(r, a) => {
            let arg = eval_set(a, kb, "JOIN")?;
            join(kb, r, &arg)
        }
        SExpr::And(a, b) => {
            let x = eval_set(a, kb, "AND")?;
            if x.is_empty() {
                // Still evaluated so errors on the right are not masked.
                eval_set(b, kb, "AND")?;
                return Ok(x);
            }
            let y = eval_set(b, kb, "AND")?;
            x.intersection(&y).cloned().collect()
        }
        SExpr::Count(_) => return Err(ExecError::ExpectedSet(ctx)),
        SExpr::ArgMin(a, r) => superlative(kb, &eval_set(a, kb, "ARGMIN")?, r, Ordering::Less)?,
        SExpr::ArgMax(a, r) => superlative(kb, &eval_set(a, kb, "ARGMAX")?, r, Ordering::Greater)?,
        SExpr::Compare(op, r, lit) => compare(kb, *op, r, lit)?,
    })
}

/// Values reached from `x` by following `r` in its stated direction.
fn follow(kb: &KnowledgeBase, x: &Value, r: &RelationExpr) -> Vec<Value> {
    if r.inverse {
        kb.subjects_of(r.relation.as_str(), x).iter().map(|s| Value::Entity(s.clone())).collect()
    } else {
        match x {
            Value::Entity(e) => kb.objects_of(e.as_str(), r.relation.as_str()).iter().cloned().collect(),
            _ => Vec::new(),
        }
    }
}

fn join(kb: &KnowledgeBase, r: &RelationExpr, arg: &BTreeSet<Value>) -> BTreeSet<Value> {
    // (JOIN r X) = {s | (s r o), o in X}: the inverse walk from X.
    let back = r.flipped();
    arg.iter().flat_map(|x| follow(kb, x, &back)).collect()
}

fn ordinal_of(v: &Value) -> Result<Ordinal, ExecError> {
    v.ordinal().ok_or_else(|| ExecError::TypeMismatch(format!("{} is not numeric or a date", v.to_token())))
}

fn superlative(kb: &KnowledgeBase, arg: &BTreeSet<Value>, r: &RelationExpr, want: Ordering) -> Result<BTreeSet<Value>, ExecError> {
    let mut keyed: Vec<(&Value, Ordinal)> = Vec::new();
    for x in arg {
        let mut best: Option<Ordinal> = None;
        for v in follow(kb, x, r) {
            let o = ordinal_of(&v)?;
            best = Some(match best {
                None => o,
                Some(b) => match o.compare(&b) {
                    Some(ord) if ord == want => o,
                    Some(_) => b,
                    None => return Err(ExecError::TypeMismatch(format!("mixed value kinds under {r}"))),
                },
            });
        }
        if let Some(b) = best {
            keyed.push((x, b));
        }
    }
    let Some(&(_, mut extreme)) = keyed.first() else {
        return Ok(BTreeSet::new());
    };
    for (_, k) in &keyed {
        match k.compare(&extreme) {
            Some(ord) if ord == want => extreme = *k,
            Some(_) => {}
            None => return Err(ExecError::TypeMismatch(format!("mixed value kinds under {r}"))),
        }
    }
    Ok(keyed
        .into_iter()
        .filter(|(_, k)| k.compare(&extreme) == Some(Ordering::Equal))
        .map(|(x, _)| x.clone())
        .collect())
}

fn compare(kb: &KnowledgeBase, op: CompareOp, r: &RelationExpr, lit: &Value) -> Result<BTreeSet<Value>, ExecError> {
    let target = ordinal_of(lit)?;
    let mut out = BTreeSet::new();
    let mut consider = |s: Value, v: &Value| -> Result<(), ExecError> {
        let o = ordinal_of(v)?;
        let ord = o.compare(&target).ok_or_else(|| {
            ExecError::TypeMismatch(format!("{} is not comparable with {}", v.to_token(), lit.to_token()))
        })?;
        if op.holds(ord) {
            out.insert(s);
        }
        Ok(())
    };
    if r.inverse {
        for (s, o) in kb.edges(r.relation.as_str()) {
            consider(o.clone(), &Value::Entity(s.clone()))?;
        }
    } else {
        for (s, o) in kb.edges(r.relation.as_str()) {
            consider(Value::Entity(s.clone()), o)?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Finding {
    UnknownEntity(String),
    UnknownClass(String),
    UnknownRelation(String),
    /// A superlative or comparison over a relation whose values are not
    /// mutually comparable (or not comparable with the literal).
    IllTyped(String),
    /// COUNT used where a set is required.
    CountInSetPosition(String),
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::UnknownEntity(e) => write!(f, "unknown entity {e}"),
            Finding::UnknownClass(c) => write!(f, "unknown class {c}"),
            Finding::UnknownRelation(r) => write!(f, "unknown relation {r}"),
            Finding::IllTyped(m) => write!(f, "ill-typed: {m}"),
            Finding::CountInSetPosition(m) => write!(f, "COUNT in set position: {m}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckReport {
    pub findings: Vec<Finding>,
}

impl CheckReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Static well-formedness against a KB. A clean report guarantees that
/// [`execute`] succeeds.
pub fn check(expr: &SExpr, kb: &KnowledgeBase) -> CheckReport {
    let mut report = CheckReport::default();
    check_into(expr, kb, true, &mut report.findings);
    report
}

fn check_relation(r: &RelationExpr, kb: &KnowledgeBase, out: &mut Vec<Finding>) -> bool {
    if kb.has_relation(r.relation.as_str()) {
        true
    } else {
        out.push(Finding::UnknownRelation(r.relation.0.clone()));
        false
    }
}

fn check_into(expr: &SExpr, kb: &KnowledgeBase, top: bool, out: &mut Vec<Finding>) {
    match expr {
        SExpr::Entity(e) => {
            if !kb.has_entity(e.as_str()) {
                out.push(Finding::UnknownEntity(e.0.clone()));
            }
        }
        SExpr::Class(c) => {
            if !kb.has_class(c) {
                out.push(Finding::UnknownClass(c.clone()));
            }
        }
        SExpr::Literal(_) => {}
        SExpr::Join(r, a) => {
            check_relation(r, kb, out);
            check_into(a, kb, false, out);
        }
        SExpr::And(a, b) => {
            check_into(a, kb, false, out);
            check_into(b, kb, false, out);
        }
        SExpr::Count(a) => {
            if !top {
                out.push(Finding::CountInSetPosition(expr.print()));
            }
            check_into(a, kb, false, out);
        }
        SExpr::ArgMin(a, r) | SExpr::ArgMax(a, r) => {
            if check_relation(r, kb, out) && !kb.range_of(r).is_ordinal() {
                out.push(Finding::IllTyped(format!("{r} does not reach comparable values")));
            }
            check_into(a, kb, false, out);
        }
        SExpr::Compare(_, r, lit) => match lit.ordinal() {
            None => out.push(Finding::IllTyped(format!("{} is not numeric or a date", lit.to_token()))),
            Some(o) => {
                if check_relation(r, kb, out) && !kb.range_of(r).comparable_with(&o) {
                    out.push(Finding::IllTyped(format!("{r} values are not comparable with {}", lit.to_token())));
                }
            }
        },
    }
}
