//! Averaged stochastic subgradient training for the linear baseline.
//!
//! Minimizes `lambda/2 ||w||^2 + mean_i hinge(y_i (w.x_i + b))` with
//! per-step rate `eta_t = 1/(lambda (t+1))` and returns the average of
//! all iterates. The average is tracked exactly in O(nnz) per step by
//! writing `w_t = s_t * wt` (a shared scale and a sparsely-updated
//! vector) and unrolling `sum_t w_t = S_T * wt_T - sum_j S_{j-1} d_j`
//! over the sparse updates `d_j`, where `S_t = sum_{k<=t} s_k`.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{FeatureSpec, SparseVec};
use crate::{Error, Result};

pub const MODEL_VERSION: u32 = 1;
const MODEL_MAGIC: &str = "linear-model v";

#[derive(Clone, Debug)]
pub struct LinearModel {
    pub spec: FeatureSpec,
    pub lambda: f64,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    /// Raw decision margin `w.x + b`. Sign gives the class; callers that
    /// need a probability-shaped score apply [`squash`].
    pub fn margin(&self, x: &SparseVec) -> Result<f64> {
        Ok(x.dot(&self.weights)? + self.bias)
    }

    /// Header lines (version, feature spec, lambda, width) followed by
    /// the weights and bias as little-endian f32.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = format!(
            "{MODEL_MAGIC}{MODEL_VERSION}\nspec {}\nlambda {}\ndims {}\n",
            self.spec.to_line(),
            self.lambda,
            self.weights.len()
        )
        .into_bytes();
        bytes.reserve(4 * (self.weights.len() + 1));
        for &w in &self.weights {
            bytes.extend_from_slice(&(w as f32).to_le_bytes());
        }
        bytes.extend_from_slice(&(self.bias as f32).to_le_bytes());
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut lines: Vec<&[u8]> = Vec::new();
        let mut start = 0;
        for _ in 0..4 {
            let nl = bytes[start..]
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| Error::Corrupt("model header truncated".into()))?;
            lines.push(&bytes[start..start + nl]);
            start += nl + 1;
        }
        let header: Vec<&str> = lines
            .iter()
            .map(|l| std::str::from_utf8(l).map_err(|_| Error::Corrupt("non-utf8 header".into())))
            .collect::<Result<_>>()?;
        let found: u32 = header[0]
            .strip_prefix(MODEL_MAGIC)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Corrupt(format!("bad model header {:?}", header[0])))?;
        if found != MODEL_VERSION {
            return Err(Error::Version { found, expected: MODEL_VERSION });
        }
        let spec_line = header[1]
            .strip_prefix("spec ")
            .ok_or_else(|| Error::Corrupt("missing spec line".into()))?;
        let spec = FeatureSpec::from_line(spec_line)?;
        let lambda: f64 = header[2]
            .strip_prefix("lambda ")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Corrupt("missing lambda line".into()))?;
        let dims: usize = header[3]
            .strip_prefix("dims ")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Corrupt("missing dims line".into()))?;
        if dims != spec.total_dim() {
            return Err(Error::Corrupt(format!(
                "dims {dims} does not match the feature spec width {}",
                spec.total_dim()
            )));
        }
        let blob = &bytes[start..];
        if blob.len() != 4 * (dims + 1) {
            return Err(Error::Corrupt(format!(
                "weight blob holds {} bytes, expected {}",
                blob.len(),
                4 * (dims + 1)
            )));
        }
        let mut values = blob
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
        let weights: Vec<f64> = values.by_ref().take(dims).collect();
        let bias = values.next().unwrap();
        Ok(LinearModel { spec, lambda, weights, bias })
    }
}

/// Score a featurized instance: the raw margin, suitable for ranking
/// metrics. Monotone in the model's confidence, not a probability.
pub fn score_linear(model: &LinearModel, x: &SparseVec) -> Result<f64> {
    model.margin(x)
}

/// Monotone map from margins to (0,1) for thresholded accuracy;
/// `squash(0) = 0.5`.
pub fn squash(margin: f64) -> f64 {
    1.0 / (1.0 + (-margin).exp())
}

/// Full-batch objective `lambda/2 ||w||^2 + mean hinge`, for checking the
/// subgradient against finite differences.
pub fn hinge_objective(
    w: &[f64],
    b: f64,
    data: &[(SparseVec, f64)],
    lambda: f64,
) -> Result<f64> {
    let mut loss = 0.0;
    for (x, y) in data {
        loss += (1.0 - y * (x.dot(w)? + b)).max(0.0);
    }
    let sq: f64 = w.iter().map(|v| v * v).sum();
    Ok(0.5 * lambda * sq + loss / data.len() as f64)
}

/// Subgradient of [`hinge_objective`]: `lambda w - mean_{violators} y x`
/// (and `-mean_{violators} y` for the bias). At the hinge point the
/// zero-loss branch is taken.
pub fn hinge_subgradient(
    w: &[f64],
    b: f64,
    data: &[(SparseVec, f64)],
    lambda: f64,
) -> Result<(Vec<f64>, f64)> {
    let mut gw: Vec<f64> = w.iter().map(|v| lambda * v).collect();
    let mut gb = 0.0;
    let inv_n = 1.0 / data.len() as f64;
    for (x, y) in data {
        if y * (x.dot(w)? + b) < 1.0 {
            for (i, v) in x.entries() {
                gw[i] -= inv_n * y * v;
            }
            gb -= inv_n * y;
        }
    }
    Ok((gw, gb))
}

/// Train on featurized instances with binary labels. Deterministic for a
/// given seed; requires both classes present.
pub fn train_linear(
    data: &[(SparseVec, u8)],
    spec: &FeatureSpec,
    lambda: f64,
    epochs: usize,
    seed: u64,
) -> Result<LinearModel> {
    spec.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput("no training instances".into()));
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Config(format!("lambda {lambda} must be positive")));
    }
    if epochs == 0 {
        return Err(Error::Config("epochs must be positive".into()));
    }
    let dim = spec.total_dim();
    for (x, label) in data {
        if x.dim() != dim {
            return Err(Error::Shape(format!(
                "feature vector of width {} vs spec width {dim}",
                x.dim()
            )));
        }
        if *label > 1 {
            return Err(Error::Data(format!("label {label} outside 0/1")));
        }
    }
    let labels: Vec<f64> = data
        .iter()
        .map(|(_, l)| if *l == 1 { 1.0 } else { -1.0 })
        .collect();
    if labels.iter().all(|&y| y > 0.0) || labels.iter().all(|&y| y < 0.0) {
        return Err(Error::Data("training labels are single-class".into()));
    }

    let mut wt = vec![0.0f64; dim]; // w_t = s * wt
    let mut acc = vec![0.0f64; dim]; // sum_j S_{j-1} d_j over sparse updates d_j
    let mut s = 1.0f64;
    let mut big_s = 0.0f64; // running sum of s over completed steps
    let mut b = 0.0f64;
    let mut b_sum = 0.0f64;
    let mut t: u64 = 0;

    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..epochs as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(epoch));
        order.shuffle(&mut rng);
        for &at in &order {
            t += 1;
            let eta = 1.0 / (lambda * (t as f64 + 1.0));
            let (x, y) = (&data[at].0, labels[at]);
            let margin = y * (s * x.dot(&wt)? + b);
            s *= 1.0 - eta * lambda; // = t/(t+1), never zero
            if margin < 1.0 {
                let coef = eta * y / s;
                for (i, v) in x.entries() {
                    wt[i] += coef * v;
                    acc[i] += big_s * coef * v;
                }
                b += eta * y;
            }
            big_s += s;
            b_sum += b;
        }
    }

    let steps = t as f64;
    let weights: Vec<f64> = wt
        .iter()
        .zip(&acc)
        .map(|(&w, &a)| (big_s * w - a) / steps)
        .collect();
    Ok(LinearModel {
        spec: spec.clone(),
        lambda,
        weights,
        bias: b_sum / steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    use rand::Rng;

    fn sparse(dim: usize, pairs: &[(usize, f64)]) -> SparseVec {
        SparseVec::from_map(dim, pairs.iter().copied().collect())
    }

    fn toy_spec(dim: usize) -> FeatureSpec {
        // hash_dim chosen so total_dim == dim with one block
        let mut spec = FeatureSpec::all((dim - 12) / 2, 1);
        assert_eq!(spec.total_dim(), dim);
        spec.ngram_orders = vec![1];
        spec
    }

    /// Separated along coordinate 0 with a distractor on coordinate 1.
    fn separable(n: usize, dim: usize, seed: u64) -> Vec<(SparseVec, u8)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|k| {
                let label = (k % 2) as u8;
                let y = if label == 1 { 1.0 } else { -1.0 };
                let x0 = y * (1.0 + rng.random::<f64>());
                let noise = rng.random::<f64>() - 0.5;
                (sparse(dim, &[(0, x0), (1, noise)]), label)
            })
            .collect()
    }

    #[test]
    fn separable_data_reaches_perfect_accuracy() {
        let spec = toy_spec(20);
        let data = separable(60, 20, 7);
        let model = train_linear(&data, &spec, 0.01, 40, 3).unwrap();
        let correct = data
            .iter()
            .filter(|(x, label)| {
                let m = score_linear(&model, x).unwrap();
                (squash(m) >= 0.5) == (*label == 1)
            })
            .count();
        assert_eq!(correct, data.len());
    }

    #[test]
    fn weight_norm_shrinks_as_lambda_grows() {
        let spec = toy_spec(20);
        let data = separable(60, 20, 11);
        let mut norms = Vec::new();
        for c in crate::baseline::C_GRID {
            let lambda = crate::baseline::lambda_from_c(c, data.len());
            let model = train_linear(&data, &spec, lambda, 30, 3).unwrap();
            let norm: f64 = model.weights.iter().map(|w| w * w).sum::<f64>().sqrt();
            norms.push(norm);
        }
        // C_GRID descends, so lambda ascends and the norm must not grow
        for pair in norms.windows(2) {
            assert!(pair[1] <= pair[0] * (1.0 + 1e-9), "norms {norms:?}");
        }
        assert!(norms.last().unwrap() < &(norms[0] * 0.5), "norms {norms:?}");
    }

    #[test]
    fn averaged_iterates_match_a_dense_reference() {
        // independent naive trainer: dense O(dim) updates, explicit mean
        fn reference(
            data: &[(SparseVec, u8)],
            dim: usize,
            lambda: f64,
            epochs: usize,
            seed: u64,
        ) -> (Vec<f64>, f64) {
            let mut w = vec![0.0f64; dim];
            let mut b = 0.0f64;
            let mut w_mean = vec![0.0f64; dim];
            let mut b_mean = 0.0f64;
            let mut t = 0u64;
            let mut order: Vec<usize> = (0..data.len()).collect();
            for epoch in 0..epochs as u64 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(epoch));
                order.shuffle(&mut rng);
                for &at in &order {
                    t += 1;
                    let eta = 1.0 / (lambda * (t as f64 + 1.0));
                    let (x, label) = &data[at];
                    let y = if *label == 1 { 1.0 } else { -1.0 };
                    let violated = y * (x.dot(&w).unwrap() + b) < 1.0;
                    for v in w.iter_mut() {
                        *v *= 1.0 - eta * lambda;
                    }
                    if violated {
                        for (i, v) in x.entries() {
                            w[i] += eta * y * v;
                        }
                        b += eta * y;
                    }
                    for (m, v) in w_mean.iter_mut().zip(&w) {
                        *m += v;
                    }
                    b_mean += b;
                }
            }
            let steps = t as f64;
            for m in w_mean.iter_mut() {
                *m /= steps;
            }
            (w_mean, b_mean / steps)
        }

        let spec = toy_spec(18);
        let data = separable(17, 18, 5);
        for lambda in [0.5, 0.02] {
            let model = train_linear(&data, &spec, lambda, 3, 9).unwrap();
            let (w_ref, b_ref) = reference(&data, 18, lambda, 3, 9);
            for (got, want) in model.weights.iter().zip(&w_ref) {
                assert!((got - want).abs() < 1e-10, "{got} vs {want}");
            }
            assert!((model.bias - b_ref).abs() < 1e-10);
        }
    }

    #[test]
    fn subgradient_matches_finite_differences() {
        let dim = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let data: Vec<(SparseVec, f64)> = (0..8)
            .map(|k| {
                let pairs: Vec<(usize, f64)> = (0..dim)
                    .map(|i| (i, rng.random::<f64>() * 2.0 - 1.0))
                    .collect();
                (sparse(dim, &pairs), if k % 2 == 0 { 1.0 } else { -1.0 })
            })
            .collect();
        let w: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 0.5).collect();
        let b = 0.3;
        let lambda = 0.05;
        // stay away from the hinge point so the objective is smooth here
        for (x, y) in &data {
            assert!((y * (x.dot(&w).unwrap() + b) - 1.0).abs() > 1e-3);
        }
        let close = |got: f64, fd: f64| {
            (got - fd).abs() < 1e-8 || (got - fd).abs() / fd.abs() < 1e-6
        };
        let (gw, gb) = hinge_subgradient(&w, b, &data, lambda).unwrap();
        let h = 1e-6;
        for i in 0..dim {
            let mut wp = w.clone();
            wp[i] += h;
            let mut wm = w.clone();
            wm[i] -= h;
            let fd = (hinge_objective(&wp, b, &data, lambda).unwrap()
                - hinge_objective(&wm, b, &data, lambda).unwrap())
                / (2.0 * h);
            assert!(close(gw[i], fd), "coord {i}: {} vs {fd}", gw[i]);
        }
        let fd_b = (hinge_objective(&w, b + h, &data, lambda).unwrap()
            - hinge_objective(&w, b - h, &data, lambda).unwrap())
            / (2.0 * h);
        assert!(close(gb, fd_b), "bias: {gb} vs {fd_b}");
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let spec = toy_spec(20);
        let data = separable(30, 20, 13);
        let a = train_linear(&data, &spec, 0.1, 5, 42).unwrap();
        let b = train_linear(&data, &spec, 0.1, 5, 42).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.bias, b.bias);
        let c = train_linear(&data, &spec, 0.1, 5, 43).unwrap();
        assert_ne!(a.weights, c.weights);
    }

    #[test]
    fn margins_negate_with_the_model() {
        let spec = toy_spec(20);
        let data = separable(30, 20, 17);
        let mut model = train_linear(&data, &spec, 0.05, 10, 1).unwrap();
        let x = &data[0].0;
        let m = score_linear(&model, x).unwrap();
        assert!(m != 0.0);
        for w in model.weights.iter_mut() {
            *w = -*w;
        }
        model.bias = -model.bias;
        let flipped = score_linear(&model, x).unwrap();
        assert!((m + flipped).abs() < 1e-12);
        assert!((squash(0.0) - 0.5).abs() < 1e-15);
        assert!(squash(2.0) > squash(1.0));
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let spec = toy_spec(20);
        let one_class: Vec<(SparseVec, u8)> =
            (0..4).map(|_| (sparse(20, &[(0, 1.0)]), 1u8)).collect();
        assert!(matches!(
            train_linear(&one_class, &spec, 0.1, 2, 0),
            Err(Error::Data(_))
        ));
        assert!(matches!(
            train_linear(&[], &spec, 0.1, 2, 0),
            Err(Error::EmptyInput(_))
        ));
        let ok = separable(4, 20, 1);
        assert!(matches!(
            train_linear(&ok, &spec, 0.0, 2, 0),
            Err(Error::Config(_))
        ));
        let narrow = vec![(sparse(3, &[(0, 1.0)]), 1u8), (sparse(3, &[(0, -1.0)]), 0u8)];
        assert!(matches!(
            train_linear(&narrow, &spec, 0.1, 2, 0),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn model_file_round_trips_and_rejects_damage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("baseline.model");
        let spec = toy_spec(20);
        let data = separable(20, 20, 19);
        let model = train_linear(&data, &spec, 0.1, 5, 2).unwrap();
        model.save(&path).unwrap();
        let back = LinearModel::load(&path).unwrap();
        assert_eq!(back.spec, model.spec);
        assert_eq!(back.lambda, model.lambda);
        assert_eq!(back.weights.len(), model.weights.len());
        for (a, b) in back.weights.iter().zip(&model.weights) {
            assert!((a - b).abs() <= (*b as f32).abs() as f64 * 1e-7 + 1e-12);
        }
        let x = &data[0].0;
        let drift =
            (score_linear(&back, x).unwrap() - score_linear(&model, x).unwrap()).abs();
        assert!(drift < 1e-5);

        // version bump -> Version error with both numbers
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[MODEL_MAGIC.len()] = b'9';
        std::fs::write(&path, &bytes).unwrap();
        match LinearModel::load(&path).map(|_| ()) {
            Err(Error::Version { found: 9, expected: 1 }) => {}
            other => panic!("expected version error, got {other:?}"),
        }

        // truncated blob -> Corrupt
        model.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(LinearModel::load(&path), Err(Error::Corrupt(_))));
    }

    #[test]
    fn unigram_count_drives_the_margin() {
        // one hashed slot repeated k times scales the margin linearly
        let spec = toy_spec(20);
        let data = separable(20, 20, 23);
        let model = train_linear(&data, &spec, 0.1, 5, 2).unwrap();
        let once = sparse(20, &[(0, 1.0)]);
        let twice = sparse(20, &[(0, 2.0)]);
        let m1 = score_linear(&model, &once).unwrap() - model.bias;
        let m2 = score_linear(&model, &twice).unwrap() - model.bias;
        assert!((m2 - 2.0 * m1).abs() < 1e-12);
    }

    #[test]
    fn map_backed_sparse_vectors_sort_and_dedup() {
        let mut map = HashMap::new();
        map.insert(5, 1.5);
        map.insert(1, -2.0);
        map.insert(3, 0.0); // dropped
        let v = SparseVec::from_map(8, map);
        assert_eq!(v.nnz(), 2);
        let entries: Vec<(usize, f64)> = v.entries().collect();
        assert_eq!(entries, vec![(1, -2.0), (5, 1.5)]);
        assert_eq!(v.get(3), 0.0);
        assert!(v.dot(&vec![0.0; 4]).is_err());
        let dense: Vec<f64> = (0..8).map(|i| i as f64).collect();
        assert_eq!(v.dot(&dense).unwrap(), -2.0 + 7.5);
    }
}
