//! Dense feed-forward network primitives.
//!
//! Layout conventions:
//!
//! - Layer weights are stored row-major with shape `(out_dim, in_dim)`; row `j` holds the
//!   incoming weights of unit `j`.
//! - Batches are batch-major matrices, one example per row, so a layer computes
//!   `Z = A * W^T + b` on a `(batch, in_dim)` input.
//! - The loss over a batch is the mean of per-example cross-entropies, so gradients do not
//!   scale with batch size.

mod layer;
mod matrix;
mod optim;

pub use layer::{
    backward, backward_with, forward, forward_with, glorot_init, glorot_limit, Activation, DenseLayer,
    ForwardTrace, LayerGrad,
};
pub use matrix::Matrix;
pub use optim::{rmsprop_step, LayerOptimizer, RmsPropConfig, RmsPropState};

use crate::error::{Error, Result};

/// Probabilities are floored at this value before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Numerically stable elementwise logistic function.
///
/// The result stays strictly inside `(0, 1)`: saturated inputs are clamped to the smallest
/// positive normal and to the largest double below one.
pub fn sigmoid(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| sigmoid_scalar(v)).collect()
}

const SIGMOID_HI: f64 = 1.0 - f64::EPSILON / 2.0;

#[inline]
pub(crate) fn sigmoid_scalar(v: f64) -> f64 {
    let s = if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, SIGMOID_HI)
}

/// Softmax with max-subtraction.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::invalid("softmax of an empty vector"));
    }
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// `-ln(max(probs[gold], 1e-12))`.
pub fn cross_entropy(probs: &[f64], gold: usize) -> Result<f64> {
    let p = probs.get(gold).ok_or_else(|| {
        Error::invalid(format!(
            "gold class {gold} out of range for {} classes",
            probs.len()
        ))
    })?;
    Ok(-p.max(PROB_FLOOR).ln())
}

/// Mean cross-entropy over the rows of a probability matrix.
pub fn mean_cross_entropy(probs: &Matrix, gold: &[usize]) -> Result<f64> {
    if probs.rows() != gold.len() {
        return Err(Error::invalid(format!(
            "{} probability rows but {} gold labels",
            probs.rows(),
            gold.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let mut total = 0.0;
    for (row, &g) in probs.iter_rows().zip(gold) {
        total += cross_entropy(row, g)?;
    }
    Ok(total / gold.len() as f64)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_reference_points() {
        assert_eq!(sigmoid(&[0.0]), vec![0.5]);
        let v = sigmoid(&[3f64.ln()])[0];
        assert!((v - 0.75).abs() < 1e-15);
        let low = sigmoid(&[-1000.0])[0];
        assert!(low > 0.0 && low <= 1e-300 && !low.is_nan());
        let high = sigmoid(&[1000.0])[0];
        assert!(high < 1.0 && high > 0.999);
    }

    #[test]
    fn softmax_reference_points() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        for p in softmax(&[1.0, 1.0, 1.0]).unwrap() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        let a = softmax(&[2.0, -1.0]).unwrap();
        let b = softmax(&[1002.0, 999.0]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(matches!(softmax(&[]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn cross_entropy_reference_points() {
        assert_eq!(cross_entropy(&[1.0, 0.0], 0).unwrap(), 0.0);
        assert!((cross_entropy(&[0.5, 0.5], 1).unwrap() - 2f64.ln()).abs() < 1e-15);
        let floored = cross_entropy(&[1e-15, 1.0 - 1e-15], 0).unwrap();
        assert!((floored - 27.631021115928547).abs() < 1e-9);
        assert!(cross_entropy(&[0.5, 0.5], 2).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.7, 0.7]), 1);
    }
}
