use crate::error::{Error, Result};
use crate::nn::params::{Binding, Mode, ParamId, ParamStore};
use crate::tensor::{gaussian_init, Tape, Tensor, Value};

/// Variance floor in batch-norm denominators. Small enough that a batch's
/// normalized variance stays within 1e-6 of 1 for any reasonable input.
pub const BN_EPS: f64 = 1e-8;

/// Learned affine plus running statistics for one batch-norm site. The
/// running mean/var are frozen entries: persisted, never given gradients,
/// updated explicitly from batch statistics.
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub run_mean: ParamId,
    pub run_var: ParamId,
    /// Number of batches folded into the running stats, as a frozen scalar
    /// so it survives checkpointing.
    pub steps: ParamId,
}

impl BatchNorm {
    fn init(store: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        Ok(BatchNorm {
            gamma: store.add(format!("{name}.gamma"), Tensor::full(&[dim], 1.0))?,
            beta: store.add(format!("{name}.beta"), Tensor::zeros(&[dim]))?,
            run_mean: store.add_frozen(format!("{name}.run_mean"), Tensor::zeros(&[dim]))?,
            run_var: store.add_frozen(format!("{name}.run_var"), Tensor::full(&[dim], 1.0))?,
            steps: store.add_frozen(format!("{name}.steps"), Tensor::zeros(&[1]))?,
        })
    }
}

struct MlpLayer {
    w: ParamId,
    b: ParamId,
    bn: BatchNorm,
}

/// Decoder head: hidden layers of linear → batch-norm → ReLU, then a
/// single sigmoid output unit.
pub struct MlpParams {
    layers: Vec<MlpLayer>,
    w_out: ParamId,
    b_out: ParamId,
    pub momentum: f64,
}

/// Batch mean/variance observed at one batch-norm site during a training
/// forward pass; fold into the running statistics via
/// [`MlpParams::update_running_stats`] once the batch is accepted.
pub struct BatchStats {
    layer: usize,
    mean: Vec<f64>,
    var: Vec<f64>,
}

impl MlpParams {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden: &[usize],
        momentum: f64,
        std: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(hidden.len());
        let mut dim = input_dim;
        for (i, &width) in hidden.iter().enumerate() {
            let w = store.add(
                format!("{prefix}.l{i}.w"),
                gaussian_init(&[dim, width], std, seed.wrapping_add(i as u64))?,
            )?;
            let b = store.add(format!("{prefix}.l{i}.b"), Tensor::zeros(&[width]))?;
            let bn = BatchNorm::init(store, &format!("{prefix}.l{i}.bn"), width)?;
            layers.push(MlpLayer { w, b, bn });
            dim = width;
        }
        let w_out = store.add(
            format!("{prefix}.out.w"),
            gaussian_init(&[dim, 1], std, seed.wrapping_add(1000))?,
        )?;
        let b_out = store.add(format!("{prefix}.out.b"), Tensor::zeros(&[1]))?;
        Ok(MlpParams {
            layers,
            w_out,
            b_out,
            momentum,
        })
    }

    /// Decode a `[B, d]` batch into `[B]` probabilities in (0,1).
    ///
    /// Train mode normalizes with the batch's own statistics (recorded on
    /// the tape, so gradients flow through them) and returns them for a
    /// later running-stats update. Eval mode normalizes with the stored
    /// running statistics and returns no stats.
    pub fn decode(
        &self,
        tape: &mut Tape,
        binding: &Binding,
        z: Value,
        mode: Mode,
    ) -> Result<(Value, Vec<BatchStats>)> {
        let shape = tape.shape(z).to_vec();
        if shape.len() != 2 {
            return Err(Error::Shape(format!(
                "decoder input must be [batch, dim], got {shape:?}"
            )));
        }
        let batch = shape[0];
        let mut cur = z;
        let mut stats = Vec::new();
        for (idx, layer) in self.layers.iter().enumerate() {
            let lin = tape.matmul(cur, binding.value(layer.w))?;
            let pre = tape.add(lin, binding.value(layer.b))?;
            let normed = match mode {
                Mode::Train => {
                    let mean = tape.mean_over_time(pre, batch)?;
                    let centered = tape.sub(pre, mean)?;
                    let sq = tape.mul(centered, centered)?;
                    let var = tape.mean_over_time(sq, batch)?;
                    stats.push(BatchStats {
                        layer: idx,
                        mean: tape.data(mean).data().to_vec(),
                        var: tape.data(var).data().to_vec(),
                    });
                    let var_eps = tape.shift(var, BN_EPS)?;
                    let denom = tape.sqrt(var_eps)?;
                    tape.div(centered, denom)?
                }
                Mode::Eval => {
                    if tape.data(binding.value(layer.bn.steps)).data()[0] == 0.0 {
                        log::warn!(
                            "batch-norm site {idx} evaluated before any training batch; \
                             using initialized statistics"
                        );
                    }
                    let centered = tape.sub(pre, binding.value(layer.bn.run_mean))?;
                    let var_eps = tape.shift(binding.value(layer.bn.run_var), BN_EPS)?;
                    let denom = tape.sqrt(var_eps)?;
                    tape.div(centered, denom)?
                }
            };
            let scaled = tape.mul(normed, binding.value(layer.bn.gamma))?;
            let shifted = tape.add(scaled, binding.value(layer.bn.beta))?;
            cur = tape.relu(shifted)?;
        }
        let lin = tape.matmul(cur, binding.value(self.w_out))?;
        let pre = tape.add(lin, binding.value(self.b_out))?;
        let prob = tape.sigmoid(pre)?;
        let flat = tape.reshape(prob, &[batch])?;
        Ok((flat, stats))
    }

    /// Fold one training batch's statistics into the running estimates:
    /// `run ← momentum·run + (1−momentum)·batch`.
    pub fn update_running_stats(&self, store: &mut ParamStore, stats: &[BatchStats]) {
        for s in stats {
            let layer = &self.layers[s.layer];
            let m = self.momentum;
            for (slot, &v) in store
                .get_mut(layer.bn.run_mean)
                .data_mut()
                .iter_mut()
                .zip(&s.mean)
            {
                *slot = m * *slot + (1.0 - m) * v;
            }
            for (slot, &v) in store
                .get_mut(layer.bn.run_var)
                .data_mut()
                .iter_mut()
                .zip(&s.var)
            {
                *slot = m * *slot + (1.0 - m) * v;
            }
            store.get_mut(layer.bn.steps).data_mut()[0] += 1.0;
        }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }
}
