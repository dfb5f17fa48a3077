//! Fused logits losses.
//!
//! Both losses work on raw logits and fold the final activation into the
//! loss so the backward pass is the numerically trivial `prediction -
//! target` form. Loss values are means over the batch; multi-label loss
//! sums over classes within a sample.

use super::ops::{sigmoid_scalar, softmax_rows};
use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Which fused loss a model trains with. Follows the output activation:
/// sigmoid pairs with the multi-label BCE, softmax with categorical CE.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    MultiLabelBce,
    CategoricalCe,
}

impl LossKind {
    pub fn compute<F: Scalar>(self, logits: &Tensor<F>, targets: &Tensor<F>) -> Result<(F, Tensor<F>)> {
        match self {
            LossKind::MultiLabelBce => multi_label_bce_logits(logits, targets),
            LossKind::CategoricalCe => categorical_ce_logits(logits, targets),
        }
    }
}

fn check_pair<F: Scalar>(logits: &Tensor<F>, targets: &Tensor<F>) -> Result<(usize, usize)> {
    let [n, c] = logits.shape[..] else {
        return Err(Error::data(format!("loss expects (N, C) logits, got {:?}", logits.shape)));
    };
    if targets.shape != logits.shape {
        return Err(Error::data(format!(
            "target shape {:?} does not match logits shape {:?}",
            targets.shape, logits.shape
        )));
    }
    if n == 0 {
        return Err(Error::data("loss over an empty batch"));
    }
    Ok((n, c))
}

/// Multi-label binary cross-entropy on logits.
///
/// Per element: `max(z, 0) - z*y + ln(1 + exp(-|z|))`, which never
/// exponentiates a positive argument. Gradient: `(sigmoid(z) - y) / N`.
pub fn multi_label_bce_logits<F: Scalar>(logits: &Tensor<F>, targets: &Tensor<F>) -> Result<(F, Tensor<F>)> {
    let (n, _c) = check_pair(logits, targets)?;
    for &y in &targets.data {
        if y != F::zero() && y != F::one() {
            return Err(Error::data(format!("multi-label targets must be 0 or 1, got {y}")));
        }
    }
    let inv_n = F::from_f64_c(1.0 / n as f64);
    let mut loss = F::zero();
    let mut grad = Tensor::zeros(&logits.shape);
    for (i, (&z, &y)) in logits.data.iter().zip(&targets.data).enumerate() {
        let zpos = if z > F::zero() { z } else { F::zero() };
        loss += zpos - z * y + (F::one() + (-z.abs()).exp()).ln();
        grad.data[i] = (sigmoid_scalar(z) - y) * inv_n;
    }
    loss *= inv_n;
    if !loss.is_finite() {
        return Err(Error::numeric("non-finite BCE loss"));
    }
    Ok((loss, grad))
}

/// Categorical cross-entropy on logits with a fused softmax.
///
/// Per row: `logsumexp(z) - sum(y * z)` with max subtraction. Targets must
/// be one-hot (or a distribution summing to 1). Gradient:
/// `(softmax(z) - y) / N`.
pub fn categorical_ce_logits<F: Scalar>(logits: &Tensor<F>, targets: &Tensor<F>) -> Result<(F, Tensor<F>)> {
    let (n, c) = check_pair(logits, targets)?;
    let tol = F::from_f64_c(1e-6);
    for b in 0..n {
        let row_sum: F = targets.data[b * c..(b + 1) * c].iter().copied().sum();
        if (row_sum - F::one()).abs() > tol {
            return Err(Error::data(format!(
                "categorical targets must sum to 1 per row, row {b} sums to {row_sum}"
            )));
        }
    }
    let probs = softmax_rows(logits)?;
    let inv_n = F::from_f64_c(1.0 / n as f64);
    let mut loss = F::zero();
    for b in 0..n {
        let row = &logits.data[b * c..(b + 1) * c];
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let lse = max + row.iter().map(|&z| (z - max).exp()).sum::<F>().ln();
        let dot: F = row
            .iter()
            .zip(&targets.data[b * c..(b + 1) * c])
            .map(|(&z, &y)| z * y)
            .sum();
        loss += lse - dot;
    }
    loss *= inv_n;
    if !loss.is_finite() {
        return Err(Error::numeric("non-finite cross-entropy loss"));
    }
    let mut grad = probs;
    for (g, &y) in grad.data.iter_mut().zip(&targets.data) {
        *g = (*g - y) * inv_n;
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bce_matches_naive_formula_in_safe_range() {
        let logits = Tensor::from_vec(&[1, 3], vec![0.5f64, -1.0, 2.0]).unwrap();
        let targets = Tensor::from_vec(&[1, 3], vec![1.0f64, 0.0, 1.0]).unwrap();
        let (loss, grad) = multi_label_bce_logits(&logits, &targets).unwrap();
        // naive: -sum(y ln p + (1-y) ln(1-p))
        let naive: f64 = logits
            .data
            .iter()
            .zip(&targets.data)
            .map(|(&z, &y)| {
                let p = 1.0 / (1.0 + (-z).exp());
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum();
        assert_relative_eq!(loss, naive, max_relative = 1e-12);
        for (&g, (&z, &y)) in grad.data.iter().zip(logits.data.iter().zip(&targets.data)) {
            let p = 1.0 / (1.0 + (-z).exp());
            assert_relative_eq!(g, p - y, max_relative = 1e-12);
        }
    }

    #[test]
    fn bce_is_finite_for_extreme_logits() {
        let logits = Tensor::from_vec(&[1, 2], vec![5000.0f64, -5000.0]).unwrap();
        let targets = Tensor::from_vec(&[1, 2], vec![0.0f64, 1.0]).unwrap();
        let (loss, grad) = multi_label_bce_logits(&logits, &targets).unwrap();
        assert!(loss.is_finite());
        assert_relative_eq!(loss, 10_000.0, max_relative = 1e-9);
        assert!(grad.data.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn bce_rejects_soft_targets() {
        let logits = Tensor::from_vec(&[1, 2], vec![0.0f64, 0.0]).unwrap();
        let targets = Tensor::from_vec(&[1, 2], vec![0.5f64, 0.5]).unwrap();
        assert!(multi_label_bce_logits(&logits, &targets).is_err());
    }

    #[test]
    fn ce_matches_log_softmax() {
        let logits = Tensor::from_vec(&[2, 3], vec![1.0f64, 2.0, 3.0, -1.0, 0.0, 1.0]).unwrap();
        let targets = Tensor::from_vec(&[2, 3], vec![0.0f64, 0.0, 1.0, 1.0, 0.0, 0.0]).unwrap();
        let (loss, grad) = categorical_ce_logits(&logits, &targets).unwrap();
        let expect = |row: &[f64], k: usize| {
            let lse = row.iter().map(|z| z.exp()).sum::<f64>().ln();
            lse - row[k]
        };
        let naive = (expect(&logits.data[0..3], 2) + expect(&logits.data[3..6], 0)) / 2.0;
        assert_relative_eq!(loss, naive, max_relative = 1e-12);
        // gradient rows sum to zero
        for b in 0..2 {
            let s: f64 = grad.data[b * 3..(b + 1) * 3].iter().sum();
            assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn ce_is_finite_for_extreme_logits() {
        let logits = Tensor::from_vec(&[1, 2], vec![1e4f64, -1e4]).unwrap();
        let targets = Tensor::from_vec(&[1, 2], vec![0.0f64, 1.0]).unwrap();
        let (loss, _) = categorical_ce_logits(&logits, &targets).unwrap();
        assert!(loss.is_finite());
        assert_relative_eq!(loss, 2e4, max_relative = 1e-9);
    }

    #[test]
    fn ce_rejects_rows_not_summing_to_one() {
        let logits = Tensor::from_vec(&[1, 2], vec![0.0f64, 0.0]).unwrap();
        let targets = Tensor::from_vec(&[1, 2], vec![1.0f64, 1.0]).unwrap();
        assert!(categorical_ce_logits(&logits, &targets).is_err());
    }
}
