//! Dimension-wise corpus normalization statistics.

use super::FeatureMatrix;
use crate::error::{Error, Result};

/// Variances are clamped to this floor so silent dimensions stay usable.
pub const VARIANCE_FLOOR: f64 = 1e-8;

/// Per-mel-dimension mean and population variance pooled over all frames.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl NormStats {
    pub fn n_dims(&self) -> usize {
        self.mean.len()
    }

    /// Identity statistics (mean 0, variance 1).
    pub fn identity(n_dims: usize) -> Self {
        NormStats {
            mean: vec![0.0; n_dims],
            variance: vec![1.0; n_dims],
        }
    }
}

/// Single-pass sum / sum-of-squares accumulator. Partial accumulators merge
/// associatively, so a corpus can be reduced in any grouping as long as the
/// final merge order is fixed.
#[derive(Clone, Debug, Default)]
pub struct NormAccumulator {
    pub n_dims: usize,
    pub frames: u64,
    pub sum: Vec<f64>,
    pub sum_sq: Vec<f64>,
}

impl NormAccumulator {
    pub fn new(n_dims: usize) -> Self {
        NormAccumulator {
            n_dims,
            frames: 0,
            sum: vec![0.0; n_dims],
            sum_sq: vec![0.0; n_dims],
        }
    }

    pub fn add(&mut self, features: &FeatureMatrix) -> Result<()> {
        if features.n_mels != self.n_dims {
            return Err(Error::data(format!(
                "feature matrix has {} dims, accumulator expects {}",
                features.n_mels, self.n_dims
            )));
        }
        for m in 0..self.n_dims {
            for t in 0..features.n_frames {
                let v = features.at(m, t);
                self.sum[m] += v;
                self.sum_sq[m] += v * v;
            }
        }
        self.frames += features.n_frames as u64;
        Ok(())
    }

    pub fn merge(&mut self, other: &NormAccumulator) -> Result<()> {
        if other.n_dims != self.n_dims {
            return Err(Error::data("accumulator dimension mismatch"));
        }
        self.frames += other.frames;
        for m in 0..self.n_dims {
            self.sum[m] += other.sum[m];
            self.sum_sq[m] += other.sum_sq[m];
        }
        Ok(())
    }

    /// Population mean/variance with variance floor.
    pub fn finalize(&self) -> Result<NormStats> {
        if self.frames < 2 {
            return Err(Error::data(format!(
                "need at least 2 frames to fit a normalizer, got {}",
                self.frames
            )));
        }
        let n = self.frames as f64;
        let mean: Vec<f64> = self.sum.iter().map(|s| s / n).collect();
        let variance: Vec<f64> = self
            .sum_sq
            .iter()
            .zip(&mean)
            .map(|(sq, m)| (sq / n - m * m).max(VARIANCE_FLOOR))
            .collect();
        Ok(NormStats { mean, variance })
    }
}

/// Fit per-dimension statistics over a stream of feature matrices.
pub fn fit_normalizer<'a>(features: impl IntoIterator<Item = &'a FeatureMatrix>) -> Result<NormStats> {
    let mut iter = features.into_iter();
    let first = iter.next().ok_or_else(|| Error::data("empty feature stream"))?;
    let mut acc = NormAccumulator::new(first.n_mels);
    acc.add(first)?;
    for f in iter {
        acc.add(f)?;
    }
    acc.finalize()
}

/// `(x - mean) / sqrt(variance)` per mel dimension.
pub fn normalize(features: &FeatureMatrix, stats: &NormStats) -> Result<FeatureMatrix> {
    if features.n_mels != stats.n_dims() {
        return Err(Error::data(format!(
            "feature matrix has {} dims, stats fitted on {}",
            features.n_mels,
            stats.n_dims()
        )));
    }
    let mut out = features.clone();
    for m in 0..features.n_mels {
        let mean = stats.mean[m];
        let inv_std = 1.0 / stats.variance[m].sqrt();
        for t in 0..features.n_frames {
            out.values[m * features.n_frames + t] = (features.at(m, t) - mean) * inv_std;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(n_mels: usize, n_frames: usize, mut f: impl FnMut(usize, usize) -> f64) -> FeatureMatrix {
        let mut values = vec![0.0; n_mels * n_frames];
        for m in 0..n_mels {
            for t in 0..n_frames {
                values[m * n_frames + t] = f(m, t);
            }
        }
        FeatureMatrix {
            segment_ref: "t".into(),
            n_mels,
            n_frames,
            values,
        }
    }

    #[test]
    fn constant_corpus_clamps_variance() {
        let fm = matrix(4, 10, |_, _| 3.0);
        let stats = fit_normalizer([&fm]).unwrap();
        assert!(stats.mean.iter().all(|&m| (m - 3.0).abs() < 1e-12));
        assert!(stats.variance.iter().all(|&v| v == VARIANCE_FLOOR));
    }

    #[test]
    fn two_point_mean_and_variance() {
        let fm = matrix(2, 2, |_, t| if t == 0 { 0.0 } else { 2.0 });
        let stats = fit_normalizer([&fm]).unwrap();
        assert_eq!(stats.mean, vec![1.0, 1.0]);
        assert_eq!(stats.variance, vec![1.0, 1.0]);
    }

    #[test]
    fn matches_two_pass_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let corpus: Vec<FeatureMatrix> = (0..7)
            .map(|_| matrix(8, 13, |_, _| rng.gen_range(-5.0..5.0)))
            .collect();
        let stats = fit_normalizer(corpus.iter()).unwrap();

        // two-pass reference
        for m in 0..8 {
            let all: Vec<f64> = corpus
                .iter()
                .flat_map(|f| (0..f.n_frames).map(move |t| f.at(m, t)))
                .collect();
            let mean = all.iter().sum::<f64>() / all.len() as f64;
            let var = all.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / all.len() as f64;
            assert!((stats.mean[m] - mean).abs() / mean.abs().max(1.0) < 1e-9);
            assert!((stats.variance[m] - var).abs() / var.abs().max(1.0) < 1e-9);
        }
    }

    #[test]
    fn merge_equals_single_pass() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let a = matrix(4, 9, |_, _| rng.gen_range(-1.0..1.0));
        let b = matrix(4, 5, |_, _| rng.gen_range(-1.0..1.0));

        let mut acc1 = NormAccumulator::new(4);
        acc1.add(&a).unwrap();
        acc1.add(&b).unwrap();

        let mut left = NormAccumulator::new(4);
        left.add(&a).unwrap();
        let mut right = NormAccumulator::new(4);
        right.add(&b).unwrap();
        left.merge(&right).unwrap();

        assert_eq!(acc1.finalize().unwrap(), left.finalize().unwrap());
    }

    #[test]
    fn normalize_identity_and_self_stats() {
        let fm = matrix(3, 5, |m, t| (m * 5 + t) as f64);
        let same = normalize(&fm, &NormStats::identity(3)).unwrap();
        assert_eq!(same.values, fm.values);

        let constant = matrix(3, 5, |m, _| m as f64);
        let stats = fit_normalizer([&constant]).unwrap();
        let zeroed = normalize(&constant, &stats).unwrap();
        assert!(zeroed.values.iter().all(|&v| v.abs() < 1e-6));
    }

    #[test]
    fn refit_after_normalize_is_standard() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let corpus: Vec<FeatureMatrix> = (0..5)
            .map(|_| matrix(6, 20, |m, _| rng.gen_range(-2.0..2.0) + m as f64))
            .collect();
        let stats = fit_normalizer(corpus.iter()).unwrap();
        let normalized: Vec<FeatureMatrix> =
            corpus.iter().map(|f| normalize(f, &stats).unwrap()).collect();
        let refit = fit_normalizer(normalized.iter()).unwrap();
        assert!(refit.mean.iter().all(|&m| m.abs() < 1e-6));
        assert!(refit.variance.iter().all(|&v| (v - 1.0).abs() < 1e-5));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let fm = matrix(3, 4, |_, _| 0.0);
        assert!(normalize(&fm, &NormStats::identity(5)).is_err());
        assert!(fit_normalizer(std::iter::empty()).is_err());
    }
}
