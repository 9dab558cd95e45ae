//! Network building blocks: parameter storage, embedding + pooling,
//! plain and layer-normalized LSTM cells, the bidirectional driver,
//! attention heads, the batch-normalized MLP decoder, and the assembled
//! model.

pub mod attention;
pub mod check;
pub mod embedding;
pub mod ln_lstm;
pub mod lstm;
pub mod mlp;
pub mod model;
pub mod params;

pub use check::{check_params, check_params_default};
pub use model::{AttentionKind, ConverNet};
pub use params::{Binding, Mode, ParamId, ParamStore};
