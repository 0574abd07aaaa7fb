//! Softmax / cross-entropy family used by every training loop.
//!
//! Conventions, fixed here once:
//! - softmax subtracts the row maximum before exponentiating, and floors the
//!   shifted exponent (see [`Scalar::exp_floor`]) so outputs stay strictly
//!   positive for inputs up to |z| = 1e4;
//! - probabilities are clamped to `[PROB_FLOOR, 1]` before `log`;
//! - the complement probability in the modified loss `log(1 - p)` is clamped
//!   to at least `COMPLEMENT_FLOOR` so the log never reaches -inf when the
//!   agreement probability saturates;
//! - where a clamp is active the analytic gradient of that term is zero,
//!   which is the exact derivative of the clamped objective.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::num::Scalar;

/// Probability floor applied before `log` in cross-entropy.
pub const PROB_FLOOR: f64 = 1e-12;
/// Floor on `1 - p` in the modified (complement) cross-entropy.
pub const COMPLEMENT_FLOOR: f64 = 1e-7;

/// Numerically stable softmax of one logit row.
pub fn softmax<S: Scalar>(z: &[S]) -> Vec<S> {
    debug_assert!(z.len() >= 2, "softmax needs at least two classes");
    let max = z.iter().cloned().fold(S::neg_infinity(), S::max);
    let floor = S::exp_floor();
    let exps: Vec<S> = z.iter().map(|&v| ((v - max).max(floor)).exp()).collect();
    let sum: S = exps.iter().cloned().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-log p_label` after clamping, for one logit row.
pub fn cross_entropy<S: Scalar>(logits: &[S], label: usize) -> Result<S> {
    if label >= logits.len() {
        return Err(Error::input(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let p = softmax(logits)[label];
    Ok(-clamped_prob(p).ln())
}

fn clamped_prob<S: Scalar>(p: S) -> S {
    p.max(S::from_f64(PROB_FLOOR)).min(S::one())
}

/// Gradient of `cross_entropy` with respect to the logits: `softmax(z) - onehot`.
/// Zero when the probability clamp is active, matching the clamped objective.
pub fn cross_entropy_grad<S: Scalar>(logits: &[S], label: usize) -> Result<Vec<S>> {
    if label >= logits.len() {
        return Err(Error::input(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let p = softmax(logits);
    if p[label] < S::from_f64(PROB_FLOOR) {
        return Ok(vec![S::zero(); logits.len()]);
    }
    Ok(p.iter()
        .enumerate()
        .map(|(j, &pj)| if j == label { pj - S::one() } else { pj })
        .collect())
}

/// Per-example cross-entropy over a batch of logit rows.
pub fn per_example_cross_entropy<S: Scalar>(
    logits: &Matrix<S>,
    labels: &[usize],
) -> Result<Vec<S>> {
    if labels.len() != logits.rows() {
        return Err(Error::config(format!(
            "{} labels for {} logit rows",
            labels.len(),
            logits.rows()
        )));
    }
    (0..logits.rows())
        .map(|i| cross_entropy(logits.row(i), labels[i]))
        .collect()
}

/// Mean cross-entropy over a batch plus its gradient with respect to the
/// logits (already scaled by `1/n`).
pub fn mean_cross_entropy_and_grad<S: Scalar>(
    logits: &Matrix<S>,
    labels: &[usize],
) -> Result<(S, Matrix<S>)> {
    if labels.len() != logits.rows() {
        return Err(Error::config(format!(
            "{} labels for {} logit rows",
            labels.len(),
            logits.rows()
        )));
    }
    let n = logits.rows();
    let inv_n = S::one() / S::from_f64(n as f64);
    let mut total = S::zero();
    let mut grad = Matrix::zeros(n, logits.cols());
    for (i, &label) in labels.iter().enumerate() {
        total += cross_entropy(logits.row(i), label)?;
        let g = cross_entropy_grad(logits.row(i), label)?;
        for (dst, gv) in grad.row_mut(i).iter_mut().zip(g) {
            *dst = gv * inv_n;
        }
    }
    Ok((total * inv_n, grad))
}

/// `log p_label` (clamped) of one logit row: the "agreement" term of the
/// adversarial disparities. Returns the value and its gradient w.r.t. logits.
pub fn agreement_log_prob<S: Scalar>(logits: &[S], label: usize) -> (S, Vec<S>) {
    debug_assert!(label < logits.len());
    let p = softmax(logits);
    let floor = S::from_f64(PROB_FLOOR);
    if p[label] < floor {
        return (floor.ln(), vec![S::zero(); logits.len()]);
    }
    let value = p[label].min(S::one()).ln();
    let grad = p
        .iter()
        .enumerate()
        .map(|(j, &pj)| if j == label { S::one() - pj } else { -pj })
        .collect();
    (value, grad)
}

/// `log(1 - p_label)` with the complement clamped to [`COMPLEMENT_FLOOR`].
/// Returns the value and its gradient w.r.t. logits.
pub fn complement_log_prob<S: Scalar>(logits: &[S], label: usize) -> (S, Vec<S>) {
    debug_assert!(label < logits.len());
    let p = softmax(logits);
    let pc = p[label];
    let comp = S::one() - pc;
    let floor = S::from_f64(COMPLEMENT_FLOOR);
    if comp < floor {
        return (floor.ln(), vec![S::zero(); logits.len()]);
    }
    let value = comp.ln();
    // d log(1-p_c)/dz_j = p_c (p_j - [j == c]) / (1 - p_c)
    let scale = pc / comp;
    let grad = p
        .iter()
        .enumerate()
        .map(|(j, &pj)| {
            let delta = if j == label { S::one() } else { S::zero() };
            scale * (pj - delta)
        })
        .collect();
    (value, grad)
}
