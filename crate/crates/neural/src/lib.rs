//! Minimal numerical core for the ranking and generation models: dense
//! tensors, a reverse-mode tape, Adam, a vocabulary, a pooled sequence
//! scorer and an attention encoder-decoder with beam search.

pub mod beam;
pub mod checkpoint;
pub mod graph;
pub mod optim;
pub mod params;
pub mod scorer;
pub mod seq2seq;
pub mod tensor;
pub mod vocab;

pub use beam::{beam_search, greedy, Hypothesis, StepModel};
pub use checkpoint::{Checkpoint, ModelSpec};
pub use graph::{log_softmax, logsumexp, Graph, NodeId};
pub use optim::{Adam, AdamConfig};
pub use params::{Gradients, Param, ParamId, ParamStore};
pub use scorer::{EncoderKind, EncoderScorer, ScorerConfig};
pub use seq2seq::{DecodeSession, DecoderState, Encoded, EncoderDecoder, Seq2SeqConfig};
pub use tensor::Tensor;
pub use vocab::Vocabulary;

#[derive(Debug, thiserror::Error)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("index {index} out of range for size {size}")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NeuralError>;
