//! Dense f64 tensors and the recorded-operation tape for reverse-mode
//! gradients. Everything the network layers run on lives here.

mod dense;
pub mod gradcheck;
mod tape;

pub use dense::{gaussian_init, Tensor, INIT_STD_GRID};
pub use tape::{Tape, Value};
