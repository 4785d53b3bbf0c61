//! Shared signal primitives.

mod convolve;
pub mod gammatone;
pub mod stft;
pub mod wav;

pub use convolve::{convolve, convolve_samples};
pub use gammatone::{
    gammatone_analyze, gammatone_resynth, EnvelopeDomain, GammatoneBank, SubbandEnvelope,
};
pub use stft::{istft, power_spectra, stft, ComplexSpectrogram, StftPlan, WindowKind};

use crate::error::{Error, Result};

/// Mono sampled audio.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::InvalidParameter(
                "sample rate must be positive".into(),
            ));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite sample at index {i}"
            )));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn silence(len: usize, sample_rate_hz: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate_hz)
    }

    /// Unit impulse of length `len` at index `at`.
    pub fn impulse(len: usize, at: usize, sample_rate_hz: u32) -> Result<Self> {
        if at >= len {
            return Err(Error::InvalidParameter(format!(
                "impulse index {at} outside length {len}"
            )));
        }
        let mut samples = vec![0.0; len];
        samples[at] = 1.0;
        Self::new(samples, sample_rate_hz)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// Sum of squared samples.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * k).collect(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    /// Copy with the length forced to `len` (truncated or zero-padded).
    pub fn resized(&self, len: usize) -> Self {
        let mut samples = self.samples.clone();
        samples.resize(len, 0.0);
        Self {
            samples,
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    pub(crate) fn check_rate(&self, other: u32) -> Result<()> {
        if self.sample_rate_hz != other {
            return Err(Error::SampleRateMismatch(self.sample_rate_hz, other));
        }
        Ok(())
    }
}

/// Smallest power of two that is at least `n` (and at least 1).
pub(crate) fn next_pow2(n: usize) -> usize {
    n.max(1).next_power_of_two()
}
