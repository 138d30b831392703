//! Span-based joint entity, subtype and relation classifier.
//!
//! Every contiguous token span of width 1..=K in a sentence is represented
//! as the max-pool of its token vectors joined with a learned width
//! embedding. Three linear heads classify spans and span pairs:
//!
//! - entity type over `[g; h_cls]`, labels `null`, event types and span-only
//!   argument types;
//! - one subtype head per labeled argument type over `[g; h_cls; entity
//!   logits]`;
//! - relation (`null` / `has`) over `[g_i; c; g_j]`, where `c` max-pools the
//!   tokens between the two spans.

mod checkpoint;
mod config;
mod encoder;
mod gradcheck;
mod heads;
mod loss;
mod params;
mod tensor;
mod train;

use thiserror::Error;

pub use checkpoint::{
    check_config, checkpoint_bytes, load_checkpoint, read_checkpoint, save_checkpoint, CHECKPOINT_FORMAT,
    CHECKPOINT_VERSION,
};
pub use config::{EncoderKind, ModelConfig, RelationCandidatePolicy};
pub use encoder::{encode, EncoderOutput, Encoding, FileEncoder, EMBEDDINGS_FORMAT, EMBEDDINGS_VERSION};
pub use gradcheck::{
    gradient_check, gradient_check_with, relative_error, CoordinateCheck, GradCheckReport, DEFAULT_COORDINATES,
    RELATIVE_ERROR_FLOOR,
};
pub use heads::{
    entity_type_logits, enumerate_spans, forward, relation_context, relation_logits, span_representation,
    subtype_logits, RawPredictions, SpanCandidate,
};
pub use loss::{
    build_examples, forward_batch, loss, loss_and_gradients, AlignmentStats, RelationItem, SentenceExample, SpanItem,
    TrainingBatch,
};
pub use params::{init_weights, tensor_layout, ModelParams, Vocab, Weights, UNK};
pub use tensor::{argmax, cross_entropy, softmax, Real, Tensor};
pub use train::{predict_raw, sentence_inputs, train, train_with, TrainReport};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("label inventory mismatch: {0}")]
    InventoryMismatch(String),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("dimension mismatch in {field}: expected {expected}, found {found}")]
    DimensionMismatch { field: String, expected: usize, found: usize },
    #[error("non-finite loss (epoch {epoch})")]
    NonFiniteLoss { epoch: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("embeddings: {0}")]
    Embeddings(String),
    #[error("file encoder selected but no embeddings file given")]
    MissingEmbeddings,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
