//! Hate-speech detection toolkit for code-mixed short texts.
//!
//! - [`corpus`]: JSONL ingestion, tokenization, vocabularies, corpus statistics
//! - [`tensor`]: dense tensors, reverse-mode differentiation tape, Adam
//! - [`embeddings`]: skip-gram negative-sampling training, similarity probes
//! - [`models`]: CNN-1D, LSTM and BiLSTM classifiers
//! - [`evaluation`]: metrics, stratified k-fold cross-validation, reports
//! - [`synthetic`]: seeded fixture corpora

pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod seed;
pub mod synthetic;
pub mod tensor;

pub use error::{Error, Result};
