//! 4th-order gammatone filterbank.
//!
//! Each channel is a cascade of four identical complex one-pole resonators
//! (pole `r e^{j w_c}`), which yields the analytic band signal directly: its
//! magnitude is the band envelope. Analysis outputs are advanced by each
//! channel's group delay at its centre frequency so envelopes line up with
//! the input in time.
//!
//! Resynthesis does not invert the IIR filters. Instead the input is split
//! into zero-phase bands whose responses `|H_c|^2 / sum_k |H_k|^2` sum to one
//! at every frequency, so unit gains reproduce the input and per-band gains
//! reshape band energies without phase distortion.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftPlanner;

use super::{next_pow2, stft::ms_to_samples, Waveform};
use crate::error::{Error, Result};

const ORDER: i32 = 4;

/// Glasberg & Moore equivalent rectangular bandwidth in Hz.
pub fn erb_hz(f_hz: f64) -> f64 {
    24.7 * (4.37 * f_hz / 1000.0 + 1.0)
}

/// ERB-rate (number of ERBs below `f_hz`).
pub fn erb_rate(f_hz: f64) -> f64 {
    21.4 * (4.37 * f_hz / 1000.0 + 1.0).log10()
}

pub fn erb_rate_to_hz(e: f64) -> f64 {
    (10f64.powf(e / 21.4) - 1.0) * 1000.0 / 4.37
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammatoneChannel {
    pub center_hz: f64,
    pub bandwidth_hz: f64,
    pole: Complex64,
    gain: f64,
    delay: usize,
}

impl GammatoneChannel {
    fn new(center_hz: f64, sample_rate_hz: u32) -> Self {
        let fs = sample_rate_hz as f64;
        let bandwidth_hz = 1.019 * erb_hz(center_hz);
        let r = (-2.0 * PI * bandwidth_hz / fs).exp();
        let pole = Complex64::from_polar(r, 2.0 * PI * center_hz / fs);
        // unit magnitude of the analytic output for a unit cosine at centre
        let gain = 2.0 * (1.0 - r).powi(ORDER);
        let delay = (ORDER as f64 * r / (1.0 - r)).round() as usize;
        Self {
            center_hz,
            bandwidth_hz,
            pole,
            gain,
            delay,
        }
    }

    /// Group delay at the centre frequency, in samples.
    pub fn delay_samples(&self) -> usize {
        self.delay
    }

    /// Transfer function of the complex filter at `f_hz`.
    pub fn response(&self, f_hz: f64, sample_rate_hz: u32) -> Complex64 {
        let z_inv = Complex64::from_polar(1.0, -2.0 * PI * f_hz / sample_rate_hz as f64);
        let d = Complex64::new(1.0, 0.0) - self.pole * z_inv;
        self.gain / d.powi(ORDER)
    }

    /// Delay-compensated analytic band signal, same length as `x`.
    pub fn filter(&self, x: &[f64]) -> Vec<Complex64> {
        let mut state = [Complex64::default(); ORDER as usize];
        let mut out = Vec::with_capacity(x.len());
        let total = x.len() + self.delay;
        for n in 0..total {
            let mut v = Complex64::new(x.get(n).copied().unwrap_or(0.0) * self.gain, 0.0);
            for s in state.iter_mut() {
                v += self.pole * *s;
                *s = v;
            }
            if n >= self.delay {
                out.push(v);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammatoneBank {
    sample_rate_hz: u32,
    channels: Vec<GammatoneChannel>,
}

impl GammatoneBank {
    /// `num_channels` ERB-spaced channels with centres from `low_hz` to `high_hz`.
    pub fn new(
        num_channels: usize,
        low_hz: f64,
        high_hz: f64,
        sample_rate_hz: u32,
    ) -> Result<Self> {
        let nyquist = sample_rate_hz as f64 / 2.0;
        if num_channels == 0 {
            return Err(Error::InvalidParameter(
                "gammatone bank needs channels".into(),
            ));
        }
        if !(low_hz > 0.0 && low_hz < high_hz && high_hz < nyquist) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < low < high < nyquist, got {low_hz}..{high_hz} at {sample_rate_hz} Hz"
            )));
        }
        let (e0, e1) = (erb_rate(low_hz), erb_rate(high_hz));
        let channels = (0..num_channels)
            .map(|i| {
                let t = if num_channels == 1 {
                    0.0
                } else {
                    i as f64 / (num_channels - 1) as f64
                };
                GammatoneChannel::new(erb_rate_to_hz(e0 + t * (e1 - e0)), sample_rate_hz)
            })
            .collect();
        Ok(Self {
            sample_rate_hz,
            channels,
        })
    }

    /// 40 channels from 50 Hz to 7 kHz (or 0.45 fs when that is lower).
    pub fn default_for(sample_rate_hz: u32) -> Result<Self> {
        let high = 7000f64.min(0.45 * sample_rate_hz as f64);
        Self::new(40, 50.0, high, sample_rate_hz)
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channels(&self) -> &[GammatoneChannel] {
        &self.channels
    }

    pub fn center_freqs(&self) -> Vec<f64> {
        self.channels.iter().map(|c| c.center_hz).collect()
    }

    /// Runs `f(channel, band)` for every zero-phase synthesis band of `x`.
    pub fn for_each_band<F: FnMut(usize, &[f64])>(&self, x: &[f64], mut f: F) {
        if x.is_empty() {
            for c in 0..self.channels.len() {
                f(c, &[]);
            }
            return;
        }
        let pad = (self.sample_rate_hz as usize / 4).max(1);
        let n = next_pow2(x.len() + pad);
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);

        let mut spectrum: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        spectrum.resize(n, Complex64::default());
        fwd.process(&mut spectrum);

        let half = n / 2 + 1;
        let fs = self.sample_rate_hz as f64;
        let mut weights = vec![vec![0.0; half]; self.channels.len()];
        for k in 0..half {
            let f_hz = k as f64 * fs / n as f64;
            let mut total = 0.0;
            for (c, ch) in self.channels.iter().enumerate() {
                let p = ch.response(f_hz, self.sample_rate_hz).norm_sqr();
                weights[c][k] = p;
                total += p;
            }
            if total > 0.0 {
                for w in weights.iter_mut() {
                    w[k] /= total;
                }
            }
        }

        let scale = 1.0 / n as f64;
        let mut buf = vec![Complex64::default(); n];
        let mut band = vec![0.0; x.len()];
        for (c, w) in weights.iter().enumerate() {
            for k in 0..n {
                let wk = if k < half { w[k] } else { w[n - k] };
                buf[k] = spectrum[k] * wk;
            }
            inv.process(&mut buf);
            for (b, v) in band.iter_mut().zip(&buf) {
                *b = v.re * scale;
            }
            f(c, &band);
        }
    }

    /// Sum of all synthesis bands with unit gains.
    pub fn passthrough(&self, wave: &Waveform) -> Result<Waveform> {
        wave.check_rate(self.sample_rate_hz)?;
        let mut out = vec![0.0; wave.len()];
        self.for_each_band(wave.samples(), |_, band| {
            for (o, b) in out.iter_mut().zip(band) {
                *o += b;
            }
        });
        Waveform::new(out, wave.sample_rate_hz())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvelopeDomain {
    Magnitude,
    Power,
    /// Per-band multipliers for [`gammatone_resynth`].
    Gain,
}

/// Channels x frames non-negative matrix with its framing.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandEnvelope {
    data: Array2<f64>,
    domain: EnvelopeDomain,
    win_samples: usize,
    hop_samples: usize,
    sample_rate_hz: u32,
}

impl SubbandEnvelope {
    pub fn new(
        data: Array2<f64>,
        domain: EnvelopeDomain,
        win_samples: usize,
        hop_samples: usize,
        sample_rate_hz: u32,
    ) -> Result<Self> {
        if hop_samples == 0 || win_samples < hop_samples {
            return Err(Error::InvalidParameter(format!(
                "need window >= hop > 0, got {win_samples}/{hop_samples}"
            )));
        }
        if data.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter(
                "envelope entries must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            data,
            domain,
            win_samples,
            hop_samples,
            sample_rate_hz,
        })
    }

    /// Same framing and shape, different contents.
    pub fn with_data(&self, data: Array2<f64>, domain: EnvelopeDomain) -> Result<Self> {
        if data.dim() != self.data.dim() {
            return Err(Error::ShapeMismatch(format!(
                "{:?} vs {:?}",
                data.dim(),
                self.data.dim()
            )));
        }
        Self::new(
            data,
            domain,
            self.win_samples,
            self.hop_samples,
            self.sample_rate_hz,
        )
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn domain(&self) -> EnvelopeDomain {
        self.domain
    }

    pub fn num_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn num_frames(&self) -> usize {
        self.data.ncols()
    }

    pub fn win_samples(&self) -> usize {
        self.win_samples
    }

    pub fn hop_samples(&self) -> usize {
        self.hop_samples
    }

    pub fn win_ms(&self) -> f64 {
        self.win_samples as f64 * 1e3 / self.sample_rate_hz as f64
    }

    pub fn hop_ms(&self) -> f64 {
        self.hop_samples as f64 * 1e3 / self.sample_rate_hz as f64
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    /// Sample span `[start, end)` covered by frame `m` in a signal of `len` samples.
    pub fn frame_span(&self, m: usize, len: usize) -> (usize, usize) {
        let start = (m * self.hop_samples).min(len);
        (start, (start + self.win_samples).min(len))
    }
}

/// Frames needed to cover `len` samples; the last frame may be partial.
pub(crate) fn frames_to_cover(len: usize, win: usize, hop: usize) -> usize {
    if len <= win {
        1
    } else {
        1 + (len - win).div_ceil(hop)
    }
}

/// Per-band, per-frame mean magnitude or power of the analytic band signals.
pub fn gammatone_analyze(
    wave: &Waveform,
    bank: &GammatoneBank,
    win_ms: f64,
    hop_ms: f64,
    domain: EnvelopeDomain,
) -> Result<SubbandEnvelope> {
    if wave.is_empty() {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    wave.check_rate(bank.sample_rate_hz)?;
    if !(hop_ms > 0.0 && win_ms >= hop_ms) {
        return Err(Error::InvalidParameter(format!(
            "need win_ms >= hop_ms > 0, got {win_ms}/{hop_ms}"
        )));
    }
    if domain == EnvelopeDomain::Gain {
        return Err(Error::InvalidParameter(
            "analysis yields magnitude or power".into(),
        ));
    }
    let win = ms_to_samples(win_ms, wave.sample_rate_hz()).max(1);
    let hop = ms_to_samples(hop_ms, wave.sample_rate_hz()).max(1);
    let len = wave.len();
    let frames = frames_to_cover(len, win, hop);
    let mut data = Array2::<f64>::zeros((bank.num_channels(), frames));

    for (c, ch) in bank.channels.iter().enumerate() {
        let z = ch.filter(wave.samples());
        // prefix sums make every frame O(1)
        let mut prefix = Vec::with_capacity(len + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for v in &z {
            acc += match domain {
                EnvelopeDomain::Magnitude => v.norm(),
                _ => v.norm_sqr(),
            };
            prefix.push(acc);
        }
        for m in 0..frames {
            let start = (m * hop).min(len);
            let end = (start + win).min(len);
            let v = if end > start {
                (prefix[end] - prefix[start]) / (end - start) as f64
            } else {
                0.0
            };
            data[[c, m]] = v.max(0.0);
        }
    }
    SubbandEnvelope::new(data, domain, win, hop, wave.sample_rate_hz())
}

/// Linearly interpolated gain trajectory for one channel, anchored at frame centres.
fn gain_curve(gains: &[f64], win: usize, hop: usize, len: usize) -> Vec<f64> {
    let centre = |m: usize| {
        let start = (m * hop).min(len) as f64;
        let end = ((m * hop + win).min(len)) as f64;
        0.5 * (start + end - 1.0).max(start)
    };
    let mut out = vec![0.0; len];
    if gains.is_empty() {
        return out;
    }
    let mut m = 0;
    for (n, o) in out.iter_mut().enumerate() {
        let t = n as f64;
        while m + 1 < gains.len() && centre(m + 1) <= t {
            m += 1;
        }
        let c0 = centre(m);
        *o = if t <= c0 || m + 1 >= gains.len() {
            gains[m]
        } else {
            let c1 = centre(m + 1);
            let a = (t - c0) / (c1 - c0);
            gains[m] * (1.0 - a) + gains[m + 1] * a
        };
    }
    out
}

/// Sum of gain-modulated synthesis bands; output length equals input length.
pub fn gammatone_resynth(
    wave: &Waveform,
    bank: &GammatoneBank,
    gains: &SubbandEnvelope,
) -> Result<Waveform> {
    wave.check_rate(bank.sample_rate_hz)?;
    if gains.num_channels() != bank.num_channels() {
        return Err(Error::ShapeMismatch(format!(
            "gains have {} channels, bank has {}",
            gains.num_channels(),
            bank.num_channels()
        )));
    }
    let len = wave.len();
    let mut out = vec![0.0; len];
    bank.for_each_band(wave.samples(), |c, band| {
        let row: Vec<f64> = gains.data().row(c).to_vec();
        if row.iter().all(|&g| g == 0.0) {
            return;
        }
        let curve = gain_curve(&row, gains.win_samples(), gains.hop_samples(), len);
        for ((o, b), g) in out.iter_mut().zip(band).zip(&curve) {
            *o += b * g;
        }
    });
    Waveform::new(out, wave.sample_rate_hz())
}
