use crate::tensor::{Tape, Tensor, Value};
use crate::{Error, Result};

/// Probabilities are pinned to `[EPS, 1-EPS]` before the logs so a
/// saturated sigmoid cannot produce an infinite loss.
pub const BCE_EPS: f64 = 1e-7;

/// Batch-mean binary cross entropy of probabilities `y_hat` (`[B]`,
/// values in (0,1)) against 0/1 `labels`. `pos_weight` scales the
/// positive-label term; 1.0 leaves the loss unweighted. The mean (rather
/// than sum) keeps the learning-rate grid meaningful across batch sizes.
pub fn bce_loss(tape: &mut Tape, y_hat: Value, labels: &[u8], pos_weight: f64) -> Result<Value> {
    let shape = tape.shape(y_hat).to_vec();
    if shape.len() != 1 {
        return Err(Error::Shape(format!(
            "bce_loss: predictions must be rank 1, got {shape:?}"
        )));
    }
    let b = shape[0];
    if labels.len() != b {
        return Err(Error::Shape(format!(
            "bce_loss: {b} predictions vs {} labels",
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Data(format!("label {bad} is not 0 or 1")));
    }
    if pos_weight <= 0.0 {
        return Err(Error::Config(format!(
            "pos_weight must be positive, got {pos_weight}"
        )));
    }

    let g: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    let pos_mask = tape.constant(Tensor::from_vec(g.iter().map(|v| v * pos_weight).collect()));
    let neg_mask = tape.constant(Tensor::from_vec(g.iter().map(|v| 1.0 - v).collect()));

    let y = tape.clamp(y_hat, BCE_EPS, 1.0 - BCE_EPS)?;
    let log_y = tape.log(y)?;
    let neg_y = tape.scale(y, -1.0)?;
    let one_minus_y = tape.shift(neg_y, 1.0)?;
    let log_one_minus_y = tape.log(one_minus_y)?;

    let pos_term = tape.mul(pos_mask, log_y)?;
    let neg_term = tape.mul(neg_mask, log_one_minus_y)?;
    let per_item = tape.add(pos_term, neg_term)?;
    let total = tape.sum(per_item)?;
    tape.scale(total, -1.0 / b as f64)
}
