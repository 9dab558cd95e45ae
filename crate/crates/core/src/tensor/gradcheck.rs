//! Central-difference gradient checking. The numeric side never touches
//! the backward pass: it re-evaluates the forward closure at `x ± h`, so a
//! shared bug in both sides would have to be in the forward math itself.

use crate::error::Result;
use crate::tensor::{Tape, Tensor, Value};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_ABS_TOL: f64 = 1e-8;
pub const DEFAULT_REL_TOL: f64 = 1e-6;

/// Outcome of one gradient check. `max_score` is the worst element's
/// `min(abs_err / abs_tol, rel_err / rel_tol)`; anything below 1 passed.
#[derive(Debug)]
pub struct GradReport {
    pub pass: bool,
    pub max_score: f64,
    pub max_abs_err: f64,
    pub worst: String,
}

/// Compare analytic gradients against central differences for every element
/// of every input. `build` records the graph on the given tape, using the
/// supplied leaf values in order, and returns the scalar root.
///
/// An element passes when `|analytic - numeric| < abs_tol` or the relative
/// error (against the larger magnitude) is below `rel_tol`.
pub fn check<F>(
    inputs: &[Tensor],
    step: f64,
    abs_tol: f64,
    rel_tol: f64,
    build: F,
) -> Result<GradReport>
where
    F: Fn(&mut Tape, &[Value]) -> Result<Value>,
{
    // Analytic pass.
    let mut tape = Tape::new();
    let leaves: Vec<Value> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let root = build(&mut tape, &leaves)?;
    tape.backward(root)?;
    let analytic: Vec<Tensor> = leaves
        .iter()
        .zip(inputs)
        .map(|(&v, t)| tape.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();

    let eval = |work: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vals: Vec<Value> = work.iter().map(|t| tape.constant(t.clone())).collect();
        let root = build(&mut tape, &vals)?;
        Ok(tape.scalar(root))
    };

    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut report = GradReport {
        pass: true,
        max_score: 0.0,
        max_abs_err: 0.0,
        worst: String::new(),
    };
    for i in 0..work.len() {
        for e in 0..work[i].numel() {
            let orig = work[i].data()[e];
            work[i].data_mut()[e] = orig + step;
            let up = eval(&work)?;
            work[i].data_mut()[e] = orig - step;
            let down = eval(&work)?;
            work[i].data_mut()[e] = orig;

            let numeric = (up - down) / (2.0 * step);
            let a = analytic[i].data()[e];
            let abs_err = (a - numeric).abs();
            let denom = a.abs().max(numeric.abs());
            let rel_err = if denom > 0.0 { abs_err / denom } else { 0.0 };
            let score = (abs_err / abs_tol).min(rel_err / rel_tol);
            report.max_abs_err = report.max_abs_err.max(abs_err);
            if score > report.max_score {
                report.max_score = score;
                report.worst = format!(
                    "input {i} elem {e}: analytic {a:.3e}, numeric {numeric:.3e}"
                );
            }
            if score >= 1.0 {
                report.pass = false;
            }
        }
    }
    Ok(report)
}

/// [`check`] with the default step and tolerances.
pub fn check_default<F>(inputs: &[Tensor], build: F) -> Result<GradReport>
where
    F: Fn(&mut Tape, &[Value]) -> Result<Value>,
{
    check(inputs, DEFAULT_STEP, DEFAULT_ABS_TOL, DEFAULT_REL_TOL, build)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn every_primitive_matches_finite_differences() {
        // One composite graph per op family, checked against the oracle.
        type Build = fn(&mut Tape, &[Value]) -> crate::error::Result<Value>;
        let cases: Vec<(&str, Vec<Tensor>, Build)> = vec![
            (
                "add/mul/sub/div",
                vec![
                    Tensor::from_vec(vec![0.7, -0.3, 1.1]),
                    Tensor::from_vec(vec![0.2, 0.9, -0.4]),
                ],
                |t, v| {
                    let s = t.add(v[0], v[1])?;
                    let p = t.mul(s, v[0])?;
                    let d = t.sub(p, v[1])?;
                    let shifted = t.shift(v[1], 3.0)?; // keep denominator away from 0
                    let q = t.div(d, shifted)?;
                    t.sum(q)
                },
            ),
            (
                "row broadcast",
                vec![
                    Tensor::new(vec![0.5, -1.0, 0.25, 2.0, 0.1, -0.6], vec![3, 2]).unwrap(),
                    Tensor::from_vec(vec![0.4, -0.2]),
                ],
                |t, v| {
                    let a = t.add(v[0], v[1])?;
                    let m = t.mul(a, v[1])?;
                    let d = t.div(m, v[1])?;
                    t.sum(d)
                },
            ),
            (
                "sigmoid/tanh/exp",
                vec![Tensor::from_vec(vec![0.3, -0.8, 1.4])],
                |t, v| {
                    let s = t.sigmoid(v[0])?;
                    let h = t.tanh(s)?;
                    let e = t.exp(h)?;
                    t.sum(e)
                },
            ),
            (
                "relu/clamp",
                // stay away from the kinks at 0 and the clamp rails
                vec![Tensor::from_vec(vec![0.6, -0.7, 1.9])],
                |t, v| {
                    let r = t.relu(v[0])?;
                    let c = t.clamp(r, -1.0, 1.5)?;
                    t.sum(c)
                },
            ),
            (
                "log/sqrt",
                vec![Tensor::from_vec(vec![0.5, 1.7, 3.0])],
                |t, v| {
                    let l = t.log(v[0])?;
                    let sq = t.shift(l, 2.0)?;
                    let s = t.sqrt(sq)?;
                    t.sum(s)
                },
            ),
            (
                "matmul/row/slice",
                vec![
                    Tensor::new(vec![0.1, 0.2, -0.3, 0.4, 0.5, -0.6], vec![3, 2]).unwrap(),
                    Tensor::new(vec![0.7, -0.1, 0.3, 0.9], vec![2, 2]).unwrap(),
                ],
                |t, v| {
                    let y = t.matmul(v[0], v[1])?;
                    let r = t.row(y, 1)?;
                    let s = t.slice_rows(y, 0, 2)?;
                    let m = t.mean_over_time(s, 2)?;
                    let joined = t.concat(&[r, m])?;
                    let sq = t.mul(joined, joined)?;
                    t.sum(sq)
                },
            ),
            (
                "stack/softmax/standardize",
                vec![
                    Tensor::from_vec(vec![0.2, -0.5, 0.8]),
                    Tensor::from_vec(vec![1.0, 0.3, -0.2]),
                ],
                |t, v| {
                    let soft = t.softmax(v[0])?;
                    let std = t.standardize(v[1], 1e-8)?;
                    let m = t.stack_rows(&[soft, std])?;
                    let sq = t.mul(m, m)?;
                    t.sum(sq)
                },
            ),
            (
                "gather/reshape/scale",
                vec![Tensor::new(vec![0.4, -0.2, 0.9, 0.1, -0.7, 0.6], vec![3, 2]).unwrap()],
                |t, v| {
                    // repeated id exercises the scatter-add accumulation
                    let g = t.gather_rows(v[0], &[2, 0, 2])?;
                    let flat = t.reshape(g, &[6])?;
                    let scaled = t.scale(flat, 1.5)?;
                    let sq = t.mul(scaled, scaled)?;
                    t.sum(sq)
                },
            ),
        ];
        for (name, inputs, build) in cases {
            let report = check_default(&inputs, build).unwrap();
            assert!(report.pass, "{name}: {:?}", report);
        }
    }

    #[test]
    fn catches_a_wrong_gradient() {
        // A graph whose forward evaluation differs from what the tape
        // recorded must fail the check: perturb the closure's arithmetic
        // relative to the analytic pass by going through a non-smooth point.
        let inputs = vec![Tensor::from_vec(vec![0.0])]; // relu kink: FD says 0.5, analytic says 0
        let report = check_default(&inputs, |t, v| {
            let r = t.relu(v[0])?;
            t.sum(r)
        })
        .unwrap();
        assert!(!report.pass);
    }

    #[test]
    fn propagates_builder_errors() {
        let inputs = vec![Tensor::from_vec(vec![-1.0])];
        let err = check_default(&inputs, |t, v| {
            let l = t.log(v[0])?;
            t.sum(l)
        });
        assert!(matches!(err, Err(Error::Numeric(_))));
    }
}
