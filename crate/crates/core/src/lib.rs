//! Rank-and-generate question answering over a small knowledge base.
//!
//! A question is linked to KB entities, a pool of candidate logical forms is
//! enumerated around them, a contrastive scorer ranks the pool, and an
//! encoder-decoder reads the question with the top candidates to write the
//! final logical form. Decoded forms are executed in beam order and the
//! ranker's best candidate is the fallback.

pub mod dataset;
pub mod datagen;
pub mod enumerate;
pub mod eval;
pub mod generator;
pub mod kb;
pub mod linker;
pub mod pipeline;
pub mod ranker;
pub mod sexpr;
pub mod text;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("{0}: {1}")]
    Json(String, #[source] serde_json::Error),
    #[error(transparent)]
    Kb(#[from] kb::KbError),
    #[error(transparent)]
    Parse(#[from] sexpr::ParseError),
    #[error(transparent)]
    Neural(#[from] kbqa_neural::NeuralError),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
