//! Element-wise and row-wise tensor operations used outside the layer stack
//! (score heads, losses, tests).

use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Numerically stable logistic sigmoid.
pub fn sigmoid_scalar<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

pub fn sigmoid<F: Scalar>(t: &Tensor<F>) -> Tensor<F> {
    t.map(sigmoid_scalar)
}

/// Row-wise softmax over the last axis of a rank-2 tensor, with max
/// subtraction for stability.
pub fn softmax_rows<F: Scalar>(t: &Tensor<F>) -> Result<Tensor<F>> {
    let [n, d] = t.shape[..] else {
        return Err(Error::data(format!("softmax expects (N, D) input, got {:?}", t.shape)));
    };
    let mut out = Tensor::zeros(&[n, d]);
    for b in 0..n {
        let row = &t.data[b * d..(b + 1) * d];
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let mut sum = F::zero();
        let orow = &mut out.data[b * d..(b + 1) * d];
        for (o, &x) in orow.iter_mut().zip(row) {
            *o = (x - max).exp();
            sum += *o;
        }
        for o in orow.iter_mut() {
            *o /= sum;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid_scalar(-800.0f64), 0.0);
        assert_eq!(sigmoid_scalar(800.0f64), 1.0);
        assert_relative_eq!(sigmoid_scalar(0.0f64), 0.5);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let t = Tensor::from_vec(&[2, 3], vec![1.0f64, 2.0, 3.0, 1000.0, 1000.0, 999.0]).unwrap();
        let s = softmax_rows(&t).unwrap();
        for b in 0..2 {
            let sum: f64 = s.data[b * 3..(b + 1) * 3].iter().sum();
            assert_relative_eq!(sum, 1.0, max_relative = 1e-12);
        }
        assert!(s.data.iter().all(|v| v.is_finite()));
    }
}
