//! Trainable numeric models over TF-IDF space.

mod classifier;
mod sparse;
mod tfidf;
mod topics;

pub use classifier::{ClassifierConfig, PatternClassifier, PatternLabel, Prediction};
pub use sparse::{cosine_similarity, SparseVector};
pub use tfidf::{DocumentVector, TfIdfModel};
pub use topics::{default_topic_count, fit_topics, fit_topics_traced, topic_probabilities, TopicModel};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("backlog is empty")]
    EmptyBacklog,
    #[error("need at least {needed} distinct non-empty documents, found {found}")]
    TooFewDocuments { needed: usize, found: usize },
    #[error("vector dimensions differ ({left} vs {right})")]
    DimensionMismatch { left: usize, right: usize },
    #[error("insufficient labels: {0}")]
    InsufficientLabels(String),
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
}
