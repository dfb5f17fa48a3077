//! Triangular mel filterbank, HTK mel scale.

use crate::error::{Error, Result};

/// Non-negative triangular filters over FFT bins, row-major
/// (`weights[mel * n_bins + bin]`).
#[derive(Clone, Debug)]
pub struct MelFilterbank {
    pub n_mels: usize,
    pub n_bins: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub weights: Vec<f64>,
}

impl MelFilterbank {
    pub fn row(&self, mel: usize) -> &[f64] {
        &self.weights[mel * self.n_bins..(mel + 1) * self.n_bins]
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters with centers equally spaced on the mel scale between
/// `fmin` and `fmax`, evaluated at FFT bin center frequencies. Peaks are 1
/// (no area normalization).
pub fn build_mel_filterbank(
    n_mels: usize,
    fft_len: usize,
    sample_rate: u32,
    fmin: f64,
    fmax: f64,
) -> Result<MelFilterbank> {
    let nyquist = sample_rate as f64 / 2.0;
    if !(0.0 <= fmin && fmin < fmax && fmax <= nyquist) {
        return Err(Error::data(format!(
            "mel range [{fmin}, {fmax}] must satisfy 0 <= fmin < fmax <= {nyquist}"
        )));
    }
    if n_mels == 0 {
        return Err(Error::data("need at least one mel band"));
    }
    let n_bins = fft_len / 2 + 1;
    // n_mels + 2 edge frequencies, equally spaced in mel
    let mel_lo = hz_to_mel(fmin);
    let mel_hi = hz_to_mel(fmax);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();

    let bin_hz = sample_rate as f64 / fft_len as f64;
    let mut weights = vec![0.0f64; n_mels * n_bins];
    for m in 0..n_mels {
        let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let row = &mut weights[m * n_bins..(m + 1) * n_bins];
        let mut sum = 0.0;
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            let rising = (f - lo) / (center - lo);
            let falling = (hi - f) / (hi - center);
            *w = rising.min(falling).max(0.0);
            sum += *w;
        }
        if sum <= 0.0 {
            return Err(Error::data(format!(
                "mel filter {m} has no FFT bin support (n_mels too large for fft resolution)"
            )));
        }
    }
    Ok(MelFilterbank {
        n_mels,
        n_bins,
        fmin,
        fmax,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_default_bank() {
        let fb = build_mel_filterbank(64, 2048, 16_000, 0.0, 8000.0).unwrap();
        assert_eq!((fb.n_mels, fb.n_bins), (64, 1025));
        for m in 0..64 {
            let row = fb.row(m);
            assert!(row.iter().all(|&w| w >= 0.0));
            assert!(row.iter().sum::<f64>() > 0.0);
        }
    }

    #[test]
    fn rows_are_unimodal() {
        let fb = build_mel_filterbank(64, 2048, 16_000, 0.0, 8000.0).unwrap();
        for m in 0..fb.n_mels {
            let row = fb.row(m);
            // strictly rising then falling once the filter is entered
            let peak = (0..row.len()).max_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap()).unwrap();
            for k in 1..row.len() {
                if k <= peak {
                    assert!(row[k] >= row[k - 1] || row[k] == 0.0);
                } else {
                    assert!(row[k] <= row[k - 1]);
                }
            }
        }
    }

    #[test]
    fn filter_peak_is_row_maximum_near_center() {
        let fb = build_mel_filterbank(64, 2048, 16_000, 0.0, 8000.0).unwrap();
        let bin_hz = 16_000.0 / 2048.0;
        let mel_lo = hz_to_mel(0.0);
        let mel_hi = hz_to_mel(8000.0);
        for m in 0..fb.n_mels {
            let center = mel_to_hz(mel_lo + (mel_hi - mel_lo) * (m + 1) as f64 / 65.0);
            let row = fb.row(m);
            let argmax = (0..row.len()).max_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap()).unwrap();
            // peak bin is the closest realizable bin to the analytic center
            assert!((argmax as f64 * bin_hz - center).abs() <= bin_hz, "filter {m}");
        }
    }

    #[test]
    fn single_triangle_degenerate_case() {
        let fb = build_mel_filterbank(1, 512, 16_000, 100.0, 4000.0).unwrap();
        let row = fb.row(0);
        assert!(row.iter().sum::<f64>() > 0.0);
        // support stays inside (fmin, fmax)
        let bin_hz = 16_000.0 / 512.0;
        for (k, &w) in row.iter().enumerate() {
            let f = k as f64 * bin_hz;
            if w > 0.0 {
                assert!(f > 100.0 && f < 4000.0);
            }
        }
    }

    #[test]
    fn rejects_zero_support_filters() {
        // 64 filters on a 32-point FFT: low filters get no bins
        assert!(build_mel_filterbank(64, 32, 16_000, 0.0, 8000.0).is_err());
    }

    #[test]
    fn rejects_bad_range() {
        assert!(build_mel_filterbank(8, 512, 16_000, 4000.0, 1000.0).is_err());
        assert!(build_mel_filterbank(8, 512, 16_000, 0.0, 9000.0).is_err());
    }
}
