//! Short-time Fourier power spectra.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::FrameSpec;
use crate::error::{Error, Result};

/// |STFT|^2 frames, frame-major (`data[frame * n_bins + bin]`).
#[derive(Clone, Debug)]
pub struct PowerSpectrogram {
    pub n_bins: usize,
    pub n_frames: usize,
    pub data: Vec<f64>,
}

impl PowerSpectrogram {
    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.n_bins..(t + 1) * self.n_bins]
    }
}

/// Periodic Hann window of length `n`.
fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect()
}

/// Power spectrogram of a signal: windowed frames zero-padded to the FFT
/// length, no center padding, `floor((len - window)/hop) + 1` frames.
pub fn stft_power(samples: &[f64], spec: &FrameSpec, sample_rate: u32) -> Result<PowerSpectrogram> {
    spec.validate(sample_rate)?;
    let win = spec.window_samples(sample_rate);
    let hop = spec.hop_samples(sample_rate);
    let n_frames = spec.n_frames(samples.len(), sample_rate).ok_or_else(|| {
        Error::data(format!(
            "signal of {} samples shorter than the {win}-sample analysis window",
            samples.len()
        ))
    })?;
    let n_bins = spec.n_bins();
    let window = hann_periodic(win);

    let fft = FftPlanner::<f64>::new().plan_fft_forward(spec.fft_len);
    let mut buffer = vec![Complex::new(0.0, 0.0); spec.fft_len];
    let mut data = vec![0.0f64; n_frames * n_bins];
    for t in 0..n_frames {
        let start = t * hop;
        for (i, slot) in buffer.iter_mut().enumerate() {
            let v = if i < win { samples[start + i] * window[i] } else { 0.0 };
            *slot = Complex::new(v, 0.0);
        }
        fft.process(&mut buffer);
        for (k, out) in data[t * n_bins..(t + 1) * n_bins].iter_mut().enumerate() {
            *out = buffer[k].norm_sqr();
        }
    }
    Ok(PowerSpectrogram {
        n_bins,
        n_frames,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::SAMPLE_RATE;

    #[test]
    fn one_second_at_16k_gives_98_frames() {
        let spec = FrameSpec::default();
        let out = stft_power(&vec![0.0; 16_000], &spec, SAMPLE_RATE).unwrap();
        assert_eq!(out.n_frames, 98);
        assert_eq!(out.n_bins, 1025);
        assert!(out.data.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn rejects_fft_shorter_than_window() {
        let spec = FrameSpec {
            window_ms: 25,
            hop_ms: 10,
            fft_len: 256, // < 400-sample window at 16 kHz
        };
        assert!(stft_power(&vec![0.0; 16_000], &spec, SAMPLE_RATE).is_err());
    }

    /// Direct DFT of one windowed frame, the oracle for frequency placement.
    fn dft_power_at(samples: &[f64], window: &[f64], fft_len: usize, bin: usize) -> f64 {
        let mut re = 0.0;
        let mut im = 0.0;
        for (n, (&s, &w)) in samples.iter().zip(window).enumerate() {
            let phase = -2.0 * std::f64::consts::PI * bin as f64 * n as f64 / fft_len as f64;
            re += s * w * phase.cos();
            im += s * w * phase.sin();
        }
        re * re + im * im
    }

    #[test]
    fn sinusoid_peaks_at_its_bin() {
        let spec = FrameSpec::default();
        // Bin-center frequency: bin 128 of a 2048-point FFT at 16 kHz = 1000 Hz.
        let bin = 128;
        let freq = bin as f64 * SAMPLE_RATE as f64 / spec.fft_len as f64;
        let samples: Vec<f64> = (0..16_000)
            .map(|n| (2.0 * std::f64::consts::PI * freq * n as f64 / SAMPLE_RATE as f64).sin())
            .collect();
        let out = stft_power(&samples, &spec, SAMPLE_RATE).unwrap();

        let frame = out.frame(0);
        let argmax = (0..out.n_bins).max_by(|&a, &b| frame[a].partial_cmp(&frame[b]).unwrap()).unwrap();
        assert_eq!(argmax, bin);

        // agree with a direct DFT summation on the same frame
        let window = hann_periodic(400);
        let oracle = dft_power_at(&samples[..400], &window, spec.fft_len, bin);
        assert!((frame[bin] - oracle).abs() / oracle < 1e-9);
    }
}
