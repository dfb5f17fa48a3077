//! Dense tensors and reverse-mode layer kernels for the MLP/CNN model
//! families.
//!
//! This is a layer-stack engine, not a general autodiff graph: each layer
//! caches what it needs during `forward` and produces input gradients in
//! `backward`. Residual blocks nest layer stacks, which is all the catalog
//! architectures require.

mod checkpoint;
mod gradcheck;
pub mod layers;
mod loss;
mod network;
pub mod ops;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use layers::{Layer, Mode, Param};
pub use loss::{categorical_ce_logits, multi_label_bce_logits, LossKind};
pub use network::Network;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense N-dimensional array, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<F> {
    pub shape: Vec<usize>,
    pub data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![F::zero(); shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<F>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if data.len() != expect {
            return Err(Error::data(format!(
                "tensor data length {} does not match shape {:?}",
                data.len(),
                shape
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Leading (batch) dimension.
    pub fn batch(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    pub fn fill(&mut self, v: F) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Tensor<F> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Cast element-wise through `f64`.
    pub fn cast<G: Scalar>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| G::from_f64_c(x.to_f64_c())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::<f64>::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::<f64>::from_vec(&[2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn cast_round_trip() {
        let t = Tensor::<f64>::from_vec(&[3], vec![1.5, -2.0, 0.25]).unwrap();
        let f: Tensor<f32> = t.cast();
        let back: Tensor<f64> = f.cast();
        assert_eq!(t, back);
    }
}
