//! Finite-difference checking for whole layers and models: verifies the
//! gradients the tape produces for every trainable tensor in a
//! [`ParamStore`], running the layer's real forward code rather than a
//! reimplementation.

use crate::error::Result;
use crate::nn::params::{Binding, Mode, ParamStore};
use crate::tensor::gradcheck::{GradReport, DEFAULT_ABS_TOL, DEFAULT_REL_TOL, DEFAULT_STEP};
use crate::tensor::{Tape, Value};

/// Check `d root / d theta` for every element of every trainable parameter.
/// `build` must be a pure function of the store contents (no RNG, no
/// stat updates) returning a scalar root.
pub fn check_params<F>(
    store: &mut ParamStore,
    step: f64,
    abs_tol: f64,
    rel_tol: f64,
    build: F,
) -> Result<GradReport>
where
    F: Fn(&mut Tape, &Binding) -> Result<Value>,
{
    // Analytic pass.
    let mut tape = Tape::new();
    let binding = store.bind(&mut tape, Mode::Train);
    let root = build(&mut tape, &binding)?;
    tape.backward(root)?;
    let ids: Vec<_> = store.ids().collect();
    let analytic: Vec<Option<Vec<f64>>> = ids
        .iter()
        .map(|&id| tape.grad(binding.value(id)).map(|g| g.data().to_vec()))
        .collect();

    let eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let binding = store.bind(&mut tape, Mode::Train);
        let root = build(&mut tape, &binding)?;
        Ok(tape.scalar(root))
    };

    let mut report = GradReport {
        pass: true,
        max_score: 0.0,
        max_abs_err: 0.0,
        worst: String::new(),
    };
    for (slot, &id) in ids.iter().enumerate() {
        if !store.is_trainable(id) {
            continue;
        }
        for e in 0..store.get(id).numel() {
            let orig = store.get(id).data()[e];
            store.get_mut(id).data_mut()[e] = orig + step;
            let up = eval(store)?;
            store.get_mut(id).data_mut()[e] = orig - step;
            let down = eval(store)?;
            store.get_mut(id).data_mut()[e] = orig;

            let numeric = (up - down) / (2.0 * step);
            let a = analytic[slot].as_ref().map_or(0.0, |g| g[e]);
            let abs_err = (a - numeric).abs();
            let denom = a.abs().max(numeric.abs());
            let rel_err = if denom > 0.0 { abs_err / denom } else { 0.0 };
            let score = (abs_err / abs_tol).min(rel_err / rel_tol);
            report.max_abs_err = report.max_abs_err.max(abs_err);
            if score > report.max_score {
                report.max_score = score;
                report.worst = format!(
                    "param {} elem {e}: analytic {a:.3e}, numeric {numeric:.3e}",
                    store.name(id)
                );
            }
            if score >= 1.0 {
                report.pass = false;
            }
        }
    }
    Ok(report)
}

/// [`check_params`] with the default step and tolerances.
pub fn check_params_default<F>(store: &mut ParamStore, build: F) -> Result<GradReport>
where
    F: Fn(&mut Tape, &Binding) -> Result<Value>,
{
    check_params(store, DEFAULT_STEP, DEFAULT_ABS_TOL, DEFAULT_REL_TOL, build)
}
