//! Metrics and non-neural baselines.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{self, argmax, Matrix};
use crate::seed::rng_from_seed;

/// Fraction of predictions equal to the gold label.
pub fn accuracy(predictions: &[usize], golds: &[usize]) -> Result<f64> {
    check_lengths(predictions, golds)?;
    if golds.is_empty() {
        return Err(Error::invalid("accuracy of an empty prediction set"));
    }
    let correct = predictions.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(correct as f64 / golds.len() as f64)
}

fn check_lengths(predictions: &[usize], golds: &[usize]) -> Result<()> {
    if predictions.len() != golds.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} gold labels",
            predictions.len(),
            golds.len()
        )));
    }
    Ok(())
}

/// Per-class true-positive, false-positive and false-negative counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfusionTally {
    pub classes: BTreeMap<usize, ClassCounts>,
    pub total: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl ClassCounts {
    /// `2PR / (P + R)`, or 0 when precision and recall are both zero or undefined.
    pub fn f1(&self) -> f64 {
        let precision = if self.tp + self.fp == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        };
        let recall = if self.tp + self.fn_ == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        };
        if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        }
    }
}

impl ConfusionTally {
    pub fn new(predictions: &[usize], golds: &[usize]) -> Result<Self> {
        check_lengths(predictions, golds)?;
        let mut tally = ConfusionTally {
            classes: BTreeMap::new(),
            total: golds.len(),
        };
        for (&p, &g) in predictions.iter().zip(golds) {
            if p == g {
                tally.classes.entry(g).or_default().tp += 1;
            } else {
                tally.classes.entry(p).or_default().fp += 1;
                tally.classes.entry(g).or_default().fn_ += 1;
            }
        }
        Ok(tally)
    }

    pub fn counts(&self, class: usize) -> ClassCounts {
        self.classes.get(&class).copied().unwrap_or_default()
    }
}

/// Unweighted mean of per-class F1 over `alphabet`.
pub fn macro_f1(predictions: &[usize], golds: &[usize], alphabet: &[usize]) -> Result<f64> {
    if alphabet.is_empty() {
        return Err(Error::invalid("macro-F1 over an empty class alphabet"));
    }
    let tally = ConfusionTally::new(predictions, golds)?;
    let sum: f64 = alphabet.iter().map(|&c| tally.counts(c).f1()).sum();
    Ok(sum / alphabet.len() as f64)
}

/// Always predicts the most frequent training class (lowest index on ties).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MajorityClassifier {
    pub class: usize,
}

impl MajorityClassifier {
    pub fn predict(&self, n: usize) -> Vec<usize> {
        vec![self.class; n]
    }
}

pub fn majority_baseline(labels: &[usize]) -> Result<MajorityClassifier> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    // max_by_key keeps the last maximum, so iterate classes in reverse to favour low indices.
    let (&class, _) = counts
        .iter()
        .rev()
        .max_by_key(|(_, &c)| c)
        .ok_or_else(|| Error::invalid("majority baseline needs at least one label"))?;
    Ok(MajorityClassifier { class })
}

/// Multinomial logistic regression with an L2 penalty on the weights (not the biases).
#[derive(Debug, Clone, PartialEq)]
pub struct LogRegModel {
    /// `(classes, features)`.
    pub weights: Matrix,
    pub biases: Vec<f64>,
    pub l2_lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRegConfig {
    pub l2_lambda: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            l2_lambda: 1.0,
            epochs: 500,
            learning_rate: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LogRegFit {
    pub model: LogRegModel,
    pub loss: f64,
    /// Euclidean norm of the full gradient at the returned parameters.
    pub gradient_norm: f64,
}

impl LogRegModel {
    pub fn probabilities(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.weights.cols() {
            return Err(Error::invalid(format!(
                "features have {} columns, model expects {}",
                x.cols(),
                self.weights.cols()
            )));
        }
        let mut z = x.matmul_nt(&self.weights, Default::default());
        for r in 0..z.rows() {
            let row = z.row_mut(r);
            for (v, b) in row.iter_mut().zip(&self.biases) {
                *v += b;
            }
            nn::softmax_in_place(row);
        }
        Ok(z)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(self.probabilities(x)?.iter_rows().map(argmax).collect())
    }

    /// Mean cross-entropy plus `lambda / 2 * ||W||^2`, with its gradient `(dW, db)`.
    pub fn loss_and_gradient(&self, x: &Matrix, labels: &[usize]) -> Result<(f64, Matrix, Vec<f64>)> {
        let (ce, mut gw, gb) = self.cross_entropy_gradient(x, labels)?;
        let penalty = 0.5 * self.l2_lambda * self.weights.as_slice().iter().map(|w| w * w).sum::<f64>();
        for (g, w) in gw.as_mut_slice().iter_mut().zip(self.weights.as_slice()) {
            *g += self.l2_lambda * w;
        }
        Ok((ce + penalty, gw, gb))
    }

    fn cross_entropy_gradient(&self, x: &Matrix, labels: &[usize]) -> Result<(f64, Matrix, Vec<f64>)> {
        let probs = self.probabilities(x)?;
        let ce = nn::mean_cross_entropy(&probs, labels)?;
        let n = labels.len() as f64;
        let mut delta = probs;
        for (r, &g) in labels.iter().enumerate() {
            let row = delta.row_mut(r);
            row[g] -= 1.0;
            row.iter_mut().for_each(|v| *v /= n);
        }
        let gw = delta.matmul_tn(x, Default::default());
        let mut gb = vec![0.0; self.biases.len()];
        for row in delta.iter_rows() {
            for (b, d) in gb.iter_mut().zip(row) {
                *b += d;
            }
        }
        Ok((ce, gw, gb))
    }
}

/// Full-batch gradient descent on the regularised mean cross-entropy.
///
/// The penalty is applied as an implicit (proximal) step, `w <- (w - lr * g_ce) / (1 + lr * lambda)`,
/// which has the same fixed point as plain gradient descent and stays stable for any lambda.
/// Weights start from a small seeded uniform draw in `±1e-3`, biases at zero.
pub fn train_logreg(x: &Matrix, labels: &[usize], num_classes: usize, config: &LogRegConfig) -> Result<LogRegFit> {
    if x.rows() != labels.len() || labels.is_empty() {
        return Err(Error::invalid(format!(
            "{} feature rows for {} labels",
            x.rows(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::invalid(format!("label {bad} outside {num_classes} classes")));
    }
    let mut present: Vec<usize> = labels.to_vec();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Err(Error::invalid("logistic regression needs at least two classes present"));
    }
    if !(config.l2_lambda >= 0.0 && config.learning_rate > 0.0) {
        return Err(Error::invalid("l2 lambda must be >= 0 and learning rate > 0"));
    }
    let mut rng = rng_from_seed(config.seed);
    let init = (0..num_classes * x.cols()).map(|_| rng.gen_range(-1e-3..1e-3)).collect();
    let mut model = LogRegModel {
        weights: Matrix::from_vec(num_classes, x.cols(), init)?,
        biases: vec![0.0; num_classes],
        l2_lambda: config.l2_lambda,
    };
    for _ in 0..config.epochs {
        let (_, gw, gb) = model.cross_entropy_gradient(x, labels)?;
        let shrink = 1.0 / (1.0 + config.learning_rate * config.l2_lambda);
        for (w, g) in model.weights.as_mut_slice().iter_mut().zip(gw.as_slice()) {
            *w = (*w - config.learning_rate * g) * shrink;
        }
        for (b, g) in model.biases.iter_mut().zip(&gb) {
            *b -= config.learning_rate * g;
        }
    }
    let (loss, gw, gb) = model.loss_and_gradient(x, labels)?;
    let gradient_norm = gw.as_slice().iter().chain(&gb).map(|g| g * g).sum::<f64>().sqrt();
    Ok(LogRegFit {
        model,
        loss,
        gradient_norm,
    })
}
