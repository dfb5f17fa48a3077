//! Training: datasets of featurized segments, the Adam optimizer and the
//! epoch loop with validation-driven learning-rate decay and early stopping.

mod adam;
mod fit;

pub use adam::{Adam, AdamConfig};
pub use fit::{
    clip_score_table, example_tensor, fit, split_validation, train_epoch, EpochRecord, FitReport, TrainConfig,
};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// One training example: a normalized feature segment with its clip's labels.
#[derive(Clone, Debug)]
pub struct Example<F> {
    pub clip_id: String,
    pub segment_ref: String,
    /// Flattened input, length `input_len` of the owning dataset.
    pub input: Vec<F>,
    /// Sorted class indices.
    pub labels: Vec<usize>,
}

/// An in-memory training set. Segments inherit the labels of their clip.
#[derive(Clone, Debug, Default)]
pub struct Dataset<F> {
    pub input_len: usize,
    pub n_classes: usize,
    pub examples: Vec<Example<F>>,
}

impl<F: Scalar> Dataset<F> {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 {
            return Err(Error::data("dataset has no classes"));
        }
        for ex in &self.examples {
            if ex.input.len() != self.input_len {
                return Err(Error::data(format!(
                    "segment '{}': input length {} does not match dataset input length {}",
                    ex.segment_ref,
                    ex.input.len(),
                    self.input_len
                )));
            }
            if let Some(&bad) = ex.labels.iter().find(|&&l| l >= self.n_classes) {
                return Err(Error::data(format!(
                    "segment '{}': label {bad} outside {} classes",
                    ex.segment_ref, self.n_classes
                )));
            }
        }
        Ok(())
    }

    /// Distinct clip ids in first-appearance order.
    pub fn clip_ids(&self) -> Vec<String> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for ex in &self.examples {
            if seen.insert(ex.clip_id.clone()) {
                out.push(ex.clip_id.clone());
            }
        }
        out
    }

    /// Stack the chosen examples into a batched input tensor of the given
    /// per-example shape plus a multi-hot target tensor.
    pub fn batch(&self, indices: &[usize], example_shape: &[usize]) -> Result<(Tensor<F>, Tensor<F>)> {
        let per: usize = example_shape.iter().product();
        if per != self.input_len {
            return Err(Error::data(format!(
                "model input shape {example_shape:?} has {per} elements, dataset provides {}",
                self.input_len
            )));
        }
        let b = indices.len();
        let mut shape = vec![b];
        shape.extend_from_slice(example_shape);
        let mut input = Tensor::zeros(&shape);
        let mut targets = Tensor::zeros(&[b, self.n_classes]);
        for (row, &idx) in indices.iter().enumerate() {
            let ex = self
                .examples
                .get(idx)
                .ok_or_else(|| Error::data(format!("batch index {idx} out of range")))?;
            input.data[row * per..(row + 1) * per].copy_from_slice(&ex.input);
            for &l in &ex.labels {
                targets.data[row * self.n_classes + l] = F::one();
            }
        }
        Ok((input, targets))
    }
}
