//! Question datasets as JSON lines.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::kb::{EntityId, KnowledgeBase};
use crate::sexpr::{parse_with, ParseError, SExpr};
use crate::text::LinkedSpan;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    #[serde(rename = "iid")]
    Iid,
    #[serde(rename = "compositional")]
    Compositional,
    #[serde(rename = "zero-shot")]
    ZeroShot,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Iid, Level::Compositional, Level::ZeroShot];

    pub fn name(self) -> &'static str {
        match self {
            Level::Iid => "iid",
            Level::Compositional => "compositional",
            Level::ZeroShot => "zero-shot",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    /// Character offsets into the question, end exclusive.
    pub span: [usize; 2],
    pub surface: String,
    pub id: EntityId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub question: String,
    pub s_expression: String,
    pub answers: Vec<String>,
    pub entities: Vec<EntityMention>,
    pub level: Level,
}

impl Example {
    pub fn gold_expr(&self, kb: &KnowledgeBase) -> std::result::Result<SExpr, ParseError> {
        parse_with(&self.s_expression, kb)
    }

    pub fn gold_links(&self) -> Vec<LinkedSpan> {
        self.entities.iter().map(|m| LinkedSpan { span: (m.span[0], m.span[1]), entity: m.id.clone() }).collect()
    }

    pub fn gold_entities(&self) -> Vec<EntityId> {
        self.entities.iter().map(|m| m.id.clone()).collect()
    }
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(path.display().to_string(), e))?;
    parse_jsonl(&text, &path.display().to_string())
}

pub fn parse_jsonl<T: DeserializeOwned>(text: &str, name: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(line).map_err(|e| Error::Json(format!("{name}:{}", i + 1), e))?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::Io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(f);
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| Error::Json(path.display().to_string(), e))?;
        writeln!(w, "{line}").map_err(|e| Error::Io(path.display().to_string(), e))?;
    }
    w.flush().map_err(|e| Error::Io(path.display().to_string(), e))
}
