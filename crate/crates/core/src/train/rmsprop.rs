use crate::nn::{Binding, ParamStore};
use crate::tensor::{Tape, Tensor};
use crate::{Error, Result};

/// RMSProp: per-element squared-gradient average `v ← ρv + (1−ρ)g²`,
/// update `θ ← θ − lr·g/√(v+ε)`. State lives here, parallel to the
/// parameter store, so a fresh tape every batch costs nothing.
pub struct RmsProp {
    lr: f64,
    rho: f64,
    eps: f64,
    v: Vec<Tensor>,
}

impl RmsProp {
    pub fn new(store: &ParamStore, lr: f64, rho: f64, eps: f64) -> Result<Self> {
        if !(lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::Config(format!("rmsprop decay must be in [0,1), got {rho}")));
        }
        if !(eps > 0.0) {
            return Err(Error::Config(format!("rmsprop epsilon must be positive, got {eps}")));
        }
        let v = store
            .iter()
            .map(|(_, _, t, _)| Tensor::zeros(t.shape()))
            .collect();
        Ok(RmsProp { lr, rho, eps, v })
    }

    /// Apply one update from the gradients on `tape`. Parameters that took
    /// no part in the graph are left alone (their state too). Any
    /// non-finite gradient aborts the whole step — no parameter moves —
    /// with the offending parameter named.
    pub fn step(&mut self, store: &mut ParamStore, tape: &Tape, binding: &Binding) -> Result<usize> {
        // validate every gradient before touching anything
        for id in store.ids() {
            if !store.is_trainable(id) {
                continue;
            }
            if let Some(g) = tape.grad(binding.value(id)) {
                if let Some(bad) = g.data().iter().find(|x| !x.is_finite()) {
                    return Err(Error::Numeric(format!(
                        "non-finite gradient ({bad}) for parameter {:?}; batch aborted",
                        store.name(id)
                    )));
                }
            }
        }
        let mut updated = 0;
        for id in store.ids() {
            if !store.is_trainable(id) {
                continue;
            }
            let Some(g) = tape.grad(binding.value(id)) else {
                continue;
            };
            let v = &mut self.v[id.0];
            let theta = store.get_mut(id);
            for ((t, v), &g) in theta.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                *v = self.rho * *v + (1.0 - self.rho) * g * g;
                *t -= self.lr * g / (*v + self.eps).sqrt();
            }
            updated += 1;
        }
        Ok(updated)
    }
}
