//! Recurrent and attention building blocks shared by all models.

mod attention;
mod embedding;
mod lstm;

pub use attention::{attention_pool, pointer_scores, PointerParams, PointerScorer};
pub use embedding::{Embeddings, Vocab, UNK};
pub use lstm::{
    bilstm_encode, column_encode, lstm_cell, lstm_sequence, stack_rows, BiLstmParams, LstmParams,
};

use thiserror::Error;

use crate::autodiff::AdError;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum NnError {
    #[error("empty sequence")]
    EmptySequence,
    #[error("embedding file: {0}")]
    EmbeddingFile(String),
    #[error("vocabulary: {0}")]
    Vocab(String),
    #[error(transparent)]
    Ad(#[from] AdError),
}

impl NnError {
    /// Collapse into the autodiff error space for gradient-check closures.
    pub fn into_ad(self) -> AdError {
        match self {
            NnError::Ad(e) => e,
            other => AdError::Invalid(other.to_string()),
        }
    }
}
