use crate::error::{Error, Result};
use crate::nn::params::{Binding, ParamId, ParamStore};
use crate::tensor::{gaussian_init, Tape, Value};

/// Length-conditioned attention weights: a `[l_max, l_max]` table whose
/// row `s-1` holds the logits used for every sequence of length `s`
/// (entries at positions `k >= s` in that row are never read). Sequences
/// of equal length therefore share one logit vector, while different
/// lengths get independent ones.
pub struct LengthAttention {
    pub w: ParamId,
    pub l_max: usize,
}

impl LengthAttention {
    pub fn init(
        store: &mut ParamStore,
        name: &str,
        l_max: usize,
        std: f64,
        seed: u64,
    ) -> Result<Self> {
        Ok(LengthAttention {
            w: store.add(name, gaussian_init(&[l_max, l_max], std, seed)?)?,
            l_max,
        })
    }

    /// Softmax-weighted sum of the first `s` rows of `h` using the logits
    /// for length `s`. Rows past `s` touch neither output nor gradient.
    pub fn apply(
        &self,
        tape: &mut Tape,
        binding: &Binding,
        h: Value,
        s: usize,
    ) -> Result<Value> {
        check_length(tape, h, s, self.l_max)?;
        let logit_row = tape.row(binding.value(self.w), s - 1)?;
        let logits = tape.slice_rows(logit_row, 0, s)?;
        weighted_sum(tape, logits, h, s)
    }
}

/// Length-agnostic attention: a single `[l_max]` logit vector; a sequence
/// of length `s` uses its first `s` entries.
pub struct UniformAttention {
    pub w: ParamId,
    pub l_max: usize,
}

impl UniformAttention {
    pub fn init(
        store: &mut ParamStore,
        name: &str,
        l_max: usize,
        std: f64,
        seed: u64,
    ) -> Result<Self> {
        Ok(UniformAttention {
            w: store.add(name, gaussian_init(&[l_max], std, seed)?)?,
            l_max,
        })
    }

    pub fn apply(
        &self,
        tape: &mut Tape,
        binding: &Binding,
        h: Value,
        s: usize,
    ) -> Result<Value> {
        check_length(tape, h, s, self.l_max)?;
        let logits = tape.slice_rows(binding.value(self.w), 0, s)?;
        weighted_sum(tape, logits, h, s)
    }
}

fn check_length(tape: &Tape, h: Value, s: usize, l_max: usize) -> Result<()> {
    if s == 0 {
        return Err(Error::EmptyInput("attention over zero positions".into()));
    }
    if s > l_max {
        return Err(Error::Shape(format!(
            "sequence length {s} exceeds attention capacity {l_max}; truncate upstream"
        )));
    }
    let rows = tape.shape(h)[0];
    if s > rows {
        return Err(Error::Shape(format!(
            "attention over {s} positions but only {rows} rows"
        )));
    }
    Ok(())
}

/// softmax(logits) · h[..s] — the convex combination both variants share.
fn weighted_sum(tape: &mut Tape, logits: Value, h: Value, s: usize) -> Result<Value> {
    let weights = tape.softmax(logits)?;
    let valid = tape.slice_rows(h, 0, s)?;
    tape.matmul(weights, valid)
}
