//! Library for predicting which post ends a conversation thread.
//!
//! The pieces, bottom up: an f64 tensor type with a recorded-operation
//! tape for reverse-mode gradients, the network layers built on it
//! (layer-normalized bidirectional LSTM, length-conditioned attention,
//! batch-normalized MLP decoder), corpus ingestion and context-feature
//! extraction, the training loop, ranking metrics with a paired
//! permutation test, and a hashed linear baseline.

pub mod baseline;
pub mod data;
pub mod error;
pub mod features;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
