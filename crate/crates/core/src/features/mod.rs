//! Audio front end: clip segmentation, STFT power spectra, 64-band log-mel
//! features and dimension-wise normalization.
//!
//! Feature extraction runs in `f64` end to end; only the on-disk formats
//! (`.lmel`, `.lnrm`) are 32-bit.

mod io;
mod mel;
mod norm;
mod stft;
pub mod wav;

pub use io::{read_lmel, read_lnrm, write_lmel, write_lnrm};
pub use mel::{build_mel_filterbank, hz_to_mel, mel_to_hz, MelFilterbank};
pub use norm::{fit_normalizer, normalize, NormAccumulator, NormStats, VARIANCE_FLOOR};
pub use stft::{stft_power, PowerSpectrogram};

use crate::error::{Error, Result};

/// Log floor added to mel energies before taking the logarithm.
pub const LOG_FLOOR: f64 = 1e-10;
/// Processing sample rate; all input audio is resampled here first.
pub const SAMPLE_RATE: u32 = 16_000;
/// Number of mel bands.
pub const N_MELS: usize = 64;

/// A mono audio clip with its label set.
#[derive(Clone, Debug)]
pub struct AudioClip {
    pub clip_id: String,
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub labels: Vec<usize>,
}

impl AudioClip {
    pub fn new(clip_id: impl Into<String>, samples: Vec<f64>, sample_rate: u32, labels: Vec<usize>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::data("sample rate must be positive"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::data("clip contains non-finite samples"));
        }
        Ok(AudioClip {
            clip_id: clip_id.into(),
            samples,
            sample_rate,
            labels,
        })
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// A 1-second slice of a clip; inherits the clip's full label set.
#[derive(Clone, Debug)]
pub struct Segment {
    pub parent_id: String,
    pub index: usize,
    pub samples: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Segment {
    /// `{clip_id}.{index}` identifier used for feature file names.
    pub fn segment_id(&self) -> String {
        format!("{}.{}", self.parent_id, self.index)
    }
}

/// STFT analysis parameters. Defaults: 25 ms periodic-Hann window, 10 ms
/// hop, 2048-point FFT, no center padding.
#[derive(Clone, Copy, Debug)]
pub struct FrameSpec {
    pub window_ms: u32,
    pub hop_ms: u32,
    pub fft_len: usize,
}

impl Default for FrameSpec {
    fn default() -> Self {
        FrameSpec {
            window_ms: 25,
            hop_ms: 10,
            fft_len: 2048,
        }
    }
}

impl FrameSpec {
    pub fn window_samples(&self, sample_rate: u32) -> usize {
        (sample_rate as u64 * self.window_ms as u64 / 1000) as usize
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        (sample_rate as u64 * self.hop_ms as u64 / 1000) as usize
    }

    pub fn n_bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    /// Frame count for a signal of the given length, no center padding:
    /// `floor((len - window) / hop) + 1`.
    pub fn n_frames(&self, len: usize, sample_rate: u32) -> Option<usize> {
        let win = self.window_samples(sample_rate);
        let hop = self.hop_samples(sample_rate);
        if len < win || hop == 0 {
            return None;
        }
        Some((len - win) / hop + 1)
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        if self.window_ms < self.hop_ms {
            return Err(Error::data(format!(
                "window ({} ms) must be at least the hop ({} ms)",
                self.window_ms, self.hop_ms
            )));
        }
        let win = self.window_samples(sample_rate);
        if self.fft_len < win {
            return Err(Error::data(format!(
                "fft length {} smaller than window of {win} samples",
                self.fft_len
            )));
        }
        Ok(())
    }
}

/// A log-mel feature matrix for one segment, mel-major in memory
/// (`values[mel * n_frames + frame]`).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub segment_ref: String,
    pub n_mels: usize,
    pub n_frames: usize,
    pub values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn at(&self, mel: usize, frame: usize) -> f64 {
        self.values[mel * self.n_frames + frame]
    }
}

/// Cut a clip into contiguous non-overlapping 1-second segments; any
/// trailing remainder shorter than a second is discarded.
pub fn segment_clip(clip: &AudioClip) -> Result<Vec<Segment>> {
    let per_segment = clip.sample_rate as usize;
    if clip.samples.len() < per_segment {
        return Err(Error::data(format!(
            "clip '{}' is shorter than one second ({:.3}s)",
            clip.clip_id,
            clip.duration_seconds()
        )));
    }
    let count = clip.samples.len() / per_segment;
    let mut segments = Vec::with_capacity(count);
    for index in 0..count {
        let start = index * per_segment;
        segments.push(Segment {
            parent_id: clip.clip_id.clone(),
            index,
            samples: clip.samples[start..start + per_segment].to_vec(),
            labels: clip.labels.clone(),
        });
    }
    Ok(segments)
}

/// Mel energies with log floor: `log(fb . power + eps)`, shape
/// `n_mels x n_frames`.
pub fn log_mel(power: &PowerSpectrogram, fb: &MelFilterbank, floor_eps: f64, segment_ref: &str) -> Result<FeatureMatrix> {
    if power.n_bins != fb.n_bins {
        return Err(Error::data(format!(
            "power spectrum has {} bins but filterbank expects {}",
            power.n_bins, fb.n_bins
        )));
    }
    let n_frames = power.n_frames;
    let n_mels = fb.n_mels;
    let mut values = vec![0.0f64; n_mels * n_frames];
    for t in 0..n_frames {
        let frame = power.frame(t);
        for m in 0..n_mels {
            let row = fb.row(m);
            let mut energy = 0.0;
            for (w, p) in row.iter().zip(frame) {
                energy += w * p;
            }
            values[m * n_frames + t] = (energy + floor_eps).ln();
        }
    }
    Ok(FeatureMatrix {
        segment_ref: segment_ref.into(),
        n_mels,
        n_frames,
        values,
    })
}

/// Whole front end for one segment: STFT power, mel projection, log.
/// Output is raw (un-normalized) log-mel; normalization happens at load
/// time against the corpus statistics.
pub fn featurize_segment(segment: &Segment, spec: &FrameSpec, fb: &MelFilterbank, sample_rate: u32) -> Result<FeatureMatrix> {
    let power = stft_power(&segment.samples, spec, sample_rate)?;
    log_mel(&power, fb, LOG_FLOOR, &segment.segment_id())
}
