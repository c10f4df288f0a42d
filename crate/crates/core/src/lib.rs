//! Visually grounded language learning from unsegmented phoneme sequences.
//!
//! A stacked residual GRU reads one-hot phonemes and predicts an image feature
//! vector. Two word-level comparison models share the training and evaluation
//! code. The [`probing`] module measures what the hidden layers encode: word
//! boundaries, word similarity, phonological form and the timescale of
//! retained information.

pub mod data;
mod error;
pub mod numerics;
pub mod probing;
pub mod reference;

pub mod cli;
pub use error::{Error, Result};
pub mod models;
pub mod retrieval;
pub mod training;
