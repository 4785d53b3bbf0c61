//! Short-time Fourier analysis with weighted overlap-add resynthesis.
//!
//! Frames start at sample 0 and are never padded: a signal of `len` samples
//! yields `1 + (len - frame_len) / hop` frames, and resynthesis covers
//! `frame_len + (frames - 1) * hop` samples. The same window is used for
//! analysis and synthesis, so a plan is invertible exactly when the squared
//! window sums to a constant under hop shifts.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftPlanner;

use super::{next_pow2, Waveform};
use crate::error::{Error, Result};

/// Relative tolerance on the overlap-added squared window.
pub const COLA_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    /// Periodic Hann, `0.5 - 0.5 cos(2 pi n / N)`.
    Hann,
    /// Periodic Hann sampled half a sample off the grid, so no tap is zero.
    HalfSampleHann,
    Rectangular,
}

impl WindowKind {
    pub fn build(self, len: usize) -> Vec<f64> {
        let n = len as f64;
        match self {
            WindowKind::Hann => (0..len)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n).cos())
                .collect(),
            WindowKind::HalfSampleHann => (0..len)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * (i as f64 + 0.5) / n).cos())
                .collect(),
            WindowKind::Rectangular => vec![1.0; len],
        }
    }
}

/// Largest relative deviation of `sum_k w^2[n - k hop]` from its mean over one hop period.
pub fn cola_deviation(window: &[f64], hop: usize) -> f64 {
    let sums: Vec<f64> = (0..hop)
        .map(|n| window.iter().skip(n).step_by(hop).map(|w| w * w).sum())
        .collect();
    let mean = sums.iter().sum::<f64>() / sums.len() as f64;
    if mean <= 0.0 {
        return f64::INFINITY;
    }
    sums.iter()
        .map(|s| ((s - mean) / mean).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StftPlan {
    frame_len: usize,
    hop: usize,
    window: Vec<f64>,
    fft_len: usize,
}

impl StftPlan {
    /// Validated plan; rejects windows that are not constant-overlap-add at `hop`.
    pub fn new(frame_len: usize, hop: usize, window: Vec<f64>, fft_len: usize) -> Result<Self> {
        if frame_len == 0 || hop == 0 || hop > frame_len {
            return Err(Error::InvalidParameter(format!(
                "need 0 < hop <= frame_len, got hop {hop}, frame_len {frame_len}"
            )));
        }
        if window.len() != frame_len {
            return Err(Error::InvalidParameter(format!(
                "window length {} differs from frame length {frame_len}",
                window.len()
            )));
        }
        if fft_len < frame_len {
            return Err(Error::InvalidParameter(format!(
                "fft length {fft_len} shorter than frame {frame_len}"
            )));
        }
        let deviation = cola_deviation(&window, hop);
        if deviation > COLA_TOLERANCE {
            return Err(Error::NotCola { hop, deviation });
        }
        Ok(Self {
            frame_len,
            hop,
            window,
            fft_len,
        })
    }

    /// Hann-windowed plan with `fft_len` the next power of two.
    pub fn hann(frame_len: usize, hop: usize) -> Result<Self> {
        Self::new(
            frame_len,
            hop,
            WindowKind::HalfSampleHann.build(frame_len),
            next_pow2(frame_len),
        )
    }

    pub fn hann_ms(sample_rate_hz: u32, frame_ms: f64, hop_ms: f64) -> Result<Self> {
        Self::hann(
            ms_to_samples(frame_ms, sample_rate_hz),
            ms_to_samples(hop_ms, sample_rate_hz),
        )
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn fft_len(&self) -> usize {
        self.fft_len
    }

    pub fn num_bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    /// Frames produced for a signal of `len` samples (0 if shorter than a frame).
    pub fn num_frames(&self, len: usize) -> usize {
        if len < self.frame_len {
            0
        } else {
            1 + (len - self.frame_len) / self.hop
        }
    }

    pub fn output_len(&self, frames: usize) -> usize {
        if frames == 0 {
            0
        } else {
            self.frame_len + (frames - 1) * self.hop
        }
    }

    /// Smallest length `>= len` that is covered exactly by whole frames.
    pub fn padded_len(&self, len: usize) -> usize {
        if len <= self.frame_len {
            return self.frame_len;
        }
        let extra = len - self.frame_len;
        self.frame_len + extra.div_ceil(self.hop) * self.hop
    }
}

pub(crate) fn ms_to_samples(ms: f64, sample_rate_hz: u32) -> usize {
    (ms * 1e-3 * sample_rate_hz as f64).round() as usize
}

/// Complex STFT, frames x bins.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub data: Array2<Complex64>,
    pub plan: StftPlan,
    pub sample_rate_hz: u32,
}

impl ComplexSpectrogram {
    pub fn num_frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn num_bins(&self) -> usize {
        self.data.ncols()
    }
}

pub fn stft(wave: &Waveform, plan: &StftPlan) -> Result<ComplexSpectrogram> {
    let frames = plan.num_frames(wave.len());
    if frames == 0 {
        return Err(Error::TooShort {
            needed: plan.frame_len,
            got: wave.len(),
        });
    }
    let deviation = cola_deviation(&plan.window, plan.hop);
    if deviation > COLA_TOLERANCE {
        return Err(Error::NotCola {
            hop: plan.hop,
            deviation,
        });
    }
    let bins = plan.num_bins();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(plan.fft_len);
    let mut data = Array2::<Complex64>::zeros((frames, bins));
    let mut buf = vec![Complex64::default(); plan.fft_len];
    let x = wave.samples();
    for (m, mut row) in data.rows_mut().into_iter().enumerate() {
        let start = m * plan.hop;
        buf.fill(Complex64::default());
        for (b, (&s, &w)) in buf
            .iter_mut()
            .zip(x[start..start + plan.frame_len].iter().zip(&plan.window))
        {
            b.re = s * w;
        }
        fft.process(&mut buf);
        for (o, v) in row.iter_mut().zip(&buf) {
            *o = *v;
        }
    }
    Ok(ComplexSpectrogram {
        data,
        plan: plan.clone(),
        sample_rate_hz: wave.sample_rate_hz(),
    })
}

/// Weighted overlap-add inverse of [`stft`].
pub fn istft(spec: &ComplexSpectrogram) -> Result<Waveform> {
    let plan = &spec.plan;
    if spec.num_bins() != plan.num_bins() {
        return Err(Error::ShapeMismatch(format!(
            "spectrogram has {} bins, plan expects {}",
            spec.num_bins(),
            plan.num_bins()
        )));
    }
    if plan.window.len() != plan.frame_len || plan.hop == 0 || plan.fft_len < plan.frame_len {
        return Err(Error::InvalidParameter("inconsistent STFT plan".into()));
    }
    let frames = spec.num_frames();
    let out_len = plan.output_len(frames);
    let mut out = vec![0.0; out_len];
    let mut norm = vec![0.0; out_len];
    let n = plan.fft_len;
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let mut buf = vec![Complex64::default(); n];
    let scale = 1.0 / n as f64;
    for (m, row) in spec.data.rows().into_iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            buf[k] = *v;
        }
        for k in row.len()..n {
            buf[k] = row[n - k].conj();
        }
        ifft.process(&mut buf);
        let start = m * plan.hop;
        for (i, &w) in plan.window.iter().enumerate() {
            out[start + i] += buf[i].re * scale * w;
            norm[start + i] += w * w;
        }
    }
    let peak = plan.window.iter().fold(0.0_f64, |a, w| a.max(w * w));
    for (o, &d) in out.iter_mut().zip(&norm) {
        *o = if d > 1e-12 * peak { *o / d } else { 0.0 };
    }
    Waveform::new(out, spec.sample_rate_hz)
}

/// Framed power spectra `|X|^2` (frames x bins) for analysis-only use.
///
/// Unlike [`stft`] this places no overlap-add requirement on the window, so
/// ASR-style framings such as 25 ms / 10 ms Hann can be used.
pub fn power_spectra(
    wave: &Waveform,
    frame_len: usize,
    hop: usize,
    window: &[f64],
    fft_len: usize,
) -> Result<Array2<f64>> {
    if frame_len == 0 || hop == 0 || window.len() != frame_len || fft_len < frame_len {
        return Err(Error::InvalidParameter(
            "inconsistent analysis framing".into(),
        ));
    }
    if wave.len() < frame_len {
        return Err(Error::TooShort {
            needed: frame_len,
            got: wave.len(),
        });
    }
    let frames = 1 + (wave.len() - frame_len) / hop;
    let bins = fft_len / 2 + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_len);
    let mut out = Array2::<f64>::zeros((frames, bins));
    let mut buf = vec![Complex64::default(); fft_len];
    let x = wave.samples();
    for (m, mut row) in out.rows_mut().into_iter().enumerate() {
        let start = m * hop;
        buf.fill(Complex64::default());
        for (b, (&s, &w)) in buf
            .iter_mut()
            .zip(x[start..start + frame_len].iter().zip(window))
        {
            b.re = s * w;
        }
        fft.process(&mut buf);
        for (o, v) in row.iter_mut().zip(&buf) {
            *o = v.norm_sqr();
        }
    }
    Ok(out)
}
