//! Token streams for the neural models.
//!
//! Logical forms are split into parentheses, operators and identifier
//! pieces; identifiers are broken at `.`, `_` and `^^`, with the joiner kept
//! as its own token so unseen identifiers can be composed from seen pieces.
//! Linked entities and numbers copied from the question are replaced by
//! per-question slot tokens (`<e0>`, `<v0>`, ...).

use std::collections::BTreeMap;

use kbqa_neural::Vocabulary;

use crate::kb::{EntityId, KnowledgeBase, LiteralKind, Value};
use crate::sexpr::SExpr;

pub const JOINERS: [&str; 3] = ["^^", ".", "_"];
pub const INVERSE_MARKER: &str = "<inv>";
pub const MAX_SLOTS: usize = 4;
pub const OPERATORS: [&str; 12] = ["(", ")", "JOIN", "AND", "COUNT", "ARGMIN", "ARGMAX", "R", "lt", "le", "gt", "ge"];

pub fn entity_slot(i: usize) -> String {
    format!("<e{i}>")
}

pub fn value_slot(i: usize) -> String {
    format!("<v{i}>")
}

fn is_joiner(t: &str) -> bool {
    JOINERS.contains(&t)
}

/// Splits one atom at joiners, keeping them.
pub fn split_identifier(atom: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut rest = atom;
    while !rest.is_empty() {
        if let Some(j) = JOINERS.iter().find(|j| rest.starts_with(**j)) {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            out.push(j.to_string());
            rest = &rest[j.len()..];
        } else {
            let c = rest.chars().next().unwrap();
            cur.push(c);
            rest = &rest[c.len_utf8()..];
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Tokens of the printed form, without slot substitution.
pub fn tokenize_lf(expr: &SExpr) -> Vec<String> {
    tokenize_printed(&expr.print())
}

pub fn tokenize_printed(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.replace('(', " ( ").replace(')', " ) ").split_whitespace() {
        if word == "(" || word == ")" {
            out.push(word.to_string());
        } else {
            out.extend(split_identifier(word));
        }
    }
    out
}

/// Inverse of [`tokenize_printed`] for atoms that neither start nor end
/// with a joiner.
pub fn detokenize(tokens: &[String]) -> String {
    let mut out = String::new();
    let mut glue = false;
    let mut prev_open = true;
    for t in tokens {
        if is_joiner(t) {
            out.push_str(t);
            glue = true;
            continue;
        }
        if !(glue || prev_open || t == ")") {
            out.push(' ');
        }
        out.push_str(t);
        glue = false;
        prev_open = t == "(";
    }
    out
}

/// Lowercased question words with punctuation split off.
pub fn tokenize_question(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let lower = word.to_lowercase();
        let mut w = lower.as_str();
        let mut trailing = Vec::new();
        while let Some(c) = w.chars().next().filter(|c| is_punct(*c)) {
            out.push(c.to_string());
            w = &w[c.len_utf8()..];
        }
        while let Some(c) = w.chars().last().filter(|c| is_punct(*c)) {
            trailing.push(c.to_string());
            w = &w[..w.len() - c.len_utf8()];
        }
        if !w.is_empty() {
            out.push(w.to_string());
        }
        out.extend(trailing.into_iter().rev());
    }
    out
}

fn is_punct(c: char) -> bool {
    matches!(c, '?' | '!' | ',' | '.' | ';' | ':' | '"' | '\'' | '(' | ')')
}

/// An entity-linked span of the question.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkedSpan {
    /// Character offsets, end exclusive.
    pub span: (usize, usize),
    pub entity: EntityId,
}

/// Per-question mapping between slot tokens and the entities/values they
/// stand for.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Slots {
    pub entities: Vec<EntityId>,
    pub values: Vec<String>,
}

impl Slots {
    pub fn entity_token(&self, e: &EntityId) -> Option<String> {
        self.entities.iter().position(|x| x == e).map(entity_slot)
    }

    fn value_for(&self, lit: &Value) -> Option<String> {
        let Value::Literal { kind, .. } = lit else { return None };
        self.values
            .iter()
            .position(|raw| Value::literal(*kind, raw).ok().as_ref() == Some(lit))
            .map(value_slot)
    }

    /// Logical-form tokens with linked entities and question numbers slotted.
    pub fn encode_lf(&self, expr: &SExpr) -> Vec<String> {
        let mut out = Vec::new();
        self.encode_into(expr, &mut out);
        out
    }

    fn encode_into(&self, expr: &SExpr, out: &mut Vec<String>) {
        let open = |out: &mut Vec<String>, op: &str| {
            out.push("(".into());
            out.push(op.into());
        };
        let rel = |out: &mut Vec<String>, r: &crate::sexpr::RelationExpr| {
            if r.inverse {
                out.extend(["(".to_string(), "R".to_string()]);
                out.extend(split_identifier(r.relation.as_str()));
                out.push(")".into());
            } else {
                out.extend(split_identifier(r.relation.as_str()));
            }
        };
        let literal = |out: &mut Vec<String>, v: &Value| match (self.value_for(v), v) {
            (Some(slot), Value::Literal { kind, .. }) => {
                out.extend([slot, "^^".to_string(), kind.name().to_string()]);
            }
            _ => out.extend(split_identifier(&v.to_token())),
        };
        match expr {
            SExpr::Entity(e) => match self.entity_token(e) {
                Some(s) => out.push(s),
                None => out.extend(split_identifier(e.as_str())),
            },
            SExpr::Class(c) => out.extend(split_identifier(c)),
            SExpr::Literal(v) => literal(out, v),
            SExpr::Join(r, a) => {
                open(out, "JOIN");
                rel(out, r);
                self.encode_into(a, out);
                out.push(")".into());
            }
            SExpr::And(a, b) => {
                open(out, "AND");
                self.encode_into(a, out);
                self.encode_into(b, out);
                out.push(")".into());
            }
            SExpr::Count(a) => {
                open(out, "COUNT");
                self.encode_into(a, out);
                out.push(")".into());
            }
            SExpr::ArgMin(a, r) | SExpr::ArgMax(a, r) => {
                open(out, if matches!(expr, SExpr::ArgMin(..)) { "ARGMIN" } else { "ARGMAX" });
                self.encode_into(a, out);
                rel(out, r);
                out.push(")".into());
            }
            SExpr::Compare(op, r, v) => {
                open(out, op.name());
                rel(out, r);
                literal(out, v);
                out.push(")".into());
            }
        }
    }

    /// Replaces slot tokens and glues the result back into printed form.
    /// Unknown slots are left in place and will fail the KB check.
    pub fn decode_lf(&self, tokens: &[String]) -> String {
        let resolved: Vec<String> = tokens
            .iter()
            .map(|t| {
                slot_index(t, 'e')
                    .and_then(|i| self.entities.get(i).map(|e| e.0.clone()))
                    .or_else(|| slot_index(t, 'v').and_then(|i| self.values.get(i).cloned()))
                    .unwrap_or_else(|| t.clone())
            })
            .collect();
        detokenize(&resolved)
    }
}

fn slot_index(t: &str, kind: char) -> Option<usize> {
    let inner = t.strip_prefix('<')?.strip_suffix('>')?;
    let rest = inner.strip_prefix(kind)?;
    rest.parse().ok()
}

/// Numeric or date-looking question word.
fn looks_like_value(w: &str) -> bool {
    [LiteralKind::Int, LiteralKind::Float, LiteralKind::Date]
        .into_iter()
        .any(|k| Value::literal(k, w).is_ok())
        && w.chars().next().is_some_and(|c| c.is_ascii_digit() || c == '-')
}

/// Question tokens with linked spans replaced by entity slots and numbers
/// by value slots. Slots are numbered by first occurrence; spans beyond
/// [`MAX_SLOTS`] distinct entities keep their words.
pub fn slot_question(question: &str, links: &[LinkedSpan]) -> (Vec<String>, Slots) {
    let mut slots = Slots::default();
    let mut links: Vec<&LinkedSpan> = links.iter().collect();
    links.sort_by_key(|l| l.span);
    let chars: Vec<char> = question.chars().collect();
    let mut tokens = Vec::new();
    let mut pos = 0;
    let push_text = |tokens: &mut Vec<String>, slots: &mut Slots, from: usize, to: usize| {
        let s: String = chars[from..to].iter().collect();
        for w in tokenize_question(&s) {
            if looks_like_value(&w) {
                let i = match slots.values.iter().position(|v| *v == w) {
                    Some(i) => i,
                    None if slots.values.len() < MAX_SLOTS => {
                        slots.values.push(w.clone());
                        slots.values.len() - 1
                    }
                    None => {
                        tokens.push(w);
                        continue;
                    }
                };
                tokens.push(value_slot(i));
            } else {
                tokens.push(w);
            }
        }
    };
    for l in links {
        let (start, end) = (l.span.0.min(chars.len()), l.span.1.min(chars.len()));
        if start < pos || end <= start {
            continue;
        }
        push_text(&mut tokens, &mut slots, pos, start);
        let idx = match slots.entities.iter().position(|e| *e == l.entity) {
            Some(i) => Some(i),
            None if slots.entities.len() < MAX_SLOTS => {
                slots.entities.push(l.entity.clone());
                Some(slots.entities.len() - 1)
            }
            None => None,
        };
        match idx {
            Some(i) => tokens.push(entity_slot(i)),
            None => push_text(&mut tokens, &mut slots, start, end),
        }
        pos = end;
    }
    push_text(&mut tokens, &mut slots, pos, chars.len());
    (tokens, slots)
}

/// Deterministic relation listing used as the entity side of the
/// disambiguation input: sorted relations, inverse ones followed by a marker.
pub fn relations_text(kb: &KnowledgeBase, entity: &EntityId) -> String {
    let mut items: Vec<(String, bool)> = kb
        .relations_of(entity.as_str())
        .into_iter()
        .filter(|r| r.relation != *kb.type_relation())
        .map(|r| (r.relation.0, r.inverse))
        .collect();
    items.sort();
    let mut classes: Vec<&String> = kb.classes_of(entity.as_str()).collect();
    classes.sort();
    let mut parts: Vec<String> = classes.into_iter().cloned().collect();
    for (r, inv) in items {
        parts.push(if inv { format!("{r} {INVERSE_MARKER}") } else { r });
    }
    parts.join(" ")
}

pub fn tokenize_relations_text(text: &str) -> Vec<String> {
    text.split_whitespace().flat_map(split_identifier).collect()
}

/// Model vocabulary: reserved tokens, operators, slots, every schema and
/// literal piece in the KB, and the given question tokens.
pub fn build_vocabulary<'a>(kb: &KnowledgeBase, questions: impl IntoIterator<Item = &'a [String]>) -> Vocabulary {
    let mut v = Vocabulary::new();
    for t in OPERATORS.iter().chain(JOINERS.iter()) {
        v.insert(t);
    }
    v.insert(INVERSE_MARKER);
    for kind in ["int", "float", "date", "string"] {
        v.insert(kind);
    }
    for i in 0..MAX_SLOTS {
        v.insert(&entity_slot(i));
        v.insert(&value_slot(i));
    }
    let mut pieces: BTreeMap<String, ()> = BTreeMap::new();
    for r in kb.relations() {
        pieces.extend(split_identifier(r.as_str()).into_iter().map(|p| (p, ())));
    }
    for c in kb.classes() {
        pieces.extend(split_identifier(c).into_iter().map(|p| (p, ())));
    }
    for t in kb.triples() {
        if let Value::Literal { .. } = &t.object {
            pieces.extend(split_identifier(&t.object.to_token()).into_iter().map(|p| (p, ())));
        }
    }
    for p in pieces.keys() {
        v.insert(p);
    }
    for q in questions {
        for t in q {
            v.insert(t);
        }
    }
    v
}
