//! Log Mel filterbank (MelFB) and locally normalized filterbank (LNFB)
//! features, with context splicing.
//!
//! Both feature types share the same framing and Mel triangles. LNFB divides
//! every channel's energy by the energy under a wider triangle centred on the
//! same frequency, which cancels overall gain exactly and slowly varying
//! spectral tilt approximately.

mod container;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

pub use container::{read_features, write_csv, write_features, FEATURE_MAGIC, HEADER_LEN};

use crate::error::{Error, Result};
use crate::signal::Waveform;
use crate::signal::{power_spectra, WindowKind};

/// Frames on each side of the centre frame in a spliced vector.
pub const CONTEXT_FRAMES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Melfb,
    Lnfb,
}

impl FeatureKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Melfb => "melfb",
            Self::Lnfb => "lnfb",
        }
    }
}

impl std::str::FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "melfb" => Ok(Self::Melfb),
            "lnfb" => Ok(Self::Lnfb),
            other => Err(Error::InvalidParameter(format!(
                "unknown feature kind '{other}'"
            ))),
        }
    }
}

impl std::fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureParams {
    pub num_channels: usize,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub frame_ms: f64,
    pub hop_ms: f64,
    /// Added to filter energies before taking logs.
    pub log_floor: f64,
    /// Width of the LNFB normalization triangle relative to the Mel triangle.
    pub lnfb_width: f64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            num_channels: 40,
            fmin_hz: 64.0,
            fmax_hz: 7600.0,
            frame_ms: 25.0,
            hop_ms: 10.0,
            log_floor: 1e-10,
            lnfb_width: 2.0,
        }
    }
}

impl FeatureParams {
    pub fn validate(&self, sample_rate_hz: u32) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.num_channels < 3 {
            return bad(format!(
                "need at least 3 channels, got {}",
                self.num_channels
            ));
        }
        let nyquist = sample_rate_hz as f64 / 2.0;
        if !(self.fmin_hz >= 0.0 && self.fmin_hz < self.fmax_hz && self.fmax_hz <= nyquist) {
            return bad(format!(
                "need 0 <= fmin < fmax <= {nyquist} Hz, got {} and {}",
                self.fmin_hz, self.fmax_hz
            ));
        }
        if !(self.hop_ms > 0.0 && self.frame_ms >= self.hop_ms) {
            return bad("need frame_ms >= hop_ms > 0".into());
        }
        if !(self.log_floor > 0.0) {
            return bad("log floor must be positive".into());
        }
        if !(self.lnfb_width >= 1.0) {
            return bad("LNFB width factor must be at least 1".into());
        }
        Ok(())
    }

    fn frame_samples(&self, sample_rate_hz: u32) -> (usize, usize) {
        let fs = sample_rate_hz as f64;
        (
            (self.frame_ms * 1e-3 * fs).round() as usize,
            (self.hop_ms * 1e-3 * fs).round() as usize,
        )
    }
}

/// Frames x coefficients feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub data: Array2<f64>,
    pub kind: FeatureKind,
    pub spliced: bool,
    pub sample_rate_hz: u32,
    pub frame_ms: f64,
    pub hop_ms: f64,
}

impl FeatureMatrix {
    pub fn num_frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn dims(&self) -> usize {
        self.data.ncols()
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Lower edge, centre and upper edge of every Mel triangle, in Hz.
pub fn mel_triangles(p: &FeatureParams) -> Vec<(f64, f64, f64)> {
    let lo = hz_to_mel(p.fmin_hz);
    let hi = hz_to_mel(p.fmax_hz);
    let step = (hi - lo) / (p.num_channels + 1) as f64;
    let mut edges: Vec<f64> = (0..p.num_channels + 2)
        .map(|i| mel_to_hz(lo + step * i as f64))
        .collect();
    edges[0] = p.fmin_hz;
    edges[p.num_channels + 1] = p.fmax_hz;
    edges.windows(3).map(|w| (w[0], w[1], w[2])).collect()
}

fn triangle(f: f64, (lo, centre, hi): (f64, f64, f64)) -> f64 {
    if f <= lo || f >= hi {
        0.0
    } else if f <= centre {
        (f - lo) / (centre - lo)
    } else {
        (hi - f) / (hi - centre)
    }
}

/// Filter weights, channels x bins, for triangles sampled on the FFT grid.
fn filter_matrix(
    triangles: &[(f64, f64, f64)],
    fft_len: usize,
    sample_rate_hz: u32,
) -> Array2<f64> {
    let bins = fft_len / 2 + 1;
    let df = sample_rate_hz as f64 / fft_len as f64;
    Array2::from_shape_fn((triangles.len(), bins), |(c, k)| {
        triangle(k as f64 * df, triangles[c])
    })
}

/// Co-centred triangles `width` times wider on each side, clipped to the band.
fn normalization_triangles(p: &FeatureParams) -> Vec<(f64, f64, f64)> {
    mel_triangles(p)
        .into_iter()
        .map(|(lo, c, hi)| {
            (
                (c - p.lnfb_width * (c - lo)).max(p.fmin_hz),
                c,
                (c + p.lnfb_width * (hi - c)).min(p.fmax_hz),
            )
        })
        .collect()
}

/// Filterbank energies (frames x channels) of `wave` for the given triangles.
fn filter_energies(
    wave: &Waveform,
    p: &FeatureParams,
    triangles: &[(f64, f64, f64)],
) -> Result<Array2<f64>> {
    let sr = wave.sample_rate_hz();
    let (frame_len, hop) = p.frame_samples(sr);
    let fft_len = frame_len.next_power_of_two();
    let window = WindowKind::Hann.build(frame_len);
    let power = power_spectra(wave, frame_len, hop, &window, fft_len)?;
    let weights = filter_matrix(triangles, fft_len, sr);
    Ok(power.dot(&weights.t()))
}

fn too_short(wave: &Waveform, p: &FeatureParams) -> Result<()> {
    let (frame_len, _) = p.frame_samples(wave.sample_rate_hz());
    if wave.len() < frame_len {
        return Err(Error::TooShort {
            needed: frame_len,
            got: wave.len(),
        });
    }
    Ok(())
}

fn matrix(
    data: Array2<f64>,
    kind: FeatureKind,
    wave: &Waveform,
    p: &FeatureParams,
) -> FeatureMatrix {
    FeatureMatrix {
        data,
        kind,
        spliced: false,
        sample_rate_hz: wave.sample_rate_hz(),
        frame_ms: p.frame_ms,
        hop_ms: p.hop_ms,
    }
}

/// Log Mel filterbank energies, `log(max(E, floor))`.
pub fn melfb(wave: &Waveform, p: &FeatureParams) -> Result<FeatureMatrix> {
    p.validate(wave.sample_rate_hz())?;
    too_short(wave, p)?;
    let mut e = filter_energies(wave, p, &mel_triangles(p))?;
    e.mapv_inplace(|v| v.max(p.log_floor).ln());
    Ok(matrix(e, FeatureKind::Melfb, wave, p))
}

/// Locally normalized filterbank energies, `log((E + floor) / (N + floor))`.
///
/// The floor is `log_floor` times the utterance's mean normalization
/// energy, so scaling the waveform scales every term alike and the output is
/// unchanged. A silent utterance falls back to the absolute `log_floor`.
pub fn lnfb(wave: &Waveform, p: &FeatureParams) -> Result<FeatureMatrix> {
    p.validate(wave.sample_rate_hz())?;
    too_short(wave, p)?;
    let mut e = filter_energies(wave, p, &mel_triangles(p))?;
    let n = filter_energies(wave, p, &normalization_triangles(p))?;
    let level = n.mean().unwrap_or(0.0);
    let floor = if level > 0.0 {
        p.log_floor * level
    } else {
        p.log_floor
    };
    ndarray::Zip::from(&mut e)
        .and(&n)
        .for_each(|a, &b| *a = ((*a + floor) / (b + floor)).ln());
    Ok(matrix(e, FeatureKind::Lnfb, wave, p))
}

pub fn extract(kind: FeatureKind, wave: &Waveform, p: &FeatureParams) -> Result<FeatureMatrix> {
    match kind {
        FeatureKind::Melfb => melfb(wave, p),
        FeatureKind::Lnfb => lnfb(wave, p),
    }
}

/// Stacks frames `t - left ..= t + right` for every `t`, replicating edge frames.
pub fn splice(f: &FeatureMatrix, left: usize, right: usize) -> Result<FeatureMatrix> {
    if f.spliced {
        return Err(Error::InvalidParameter(
            "features are already spliced".into(),
        ));
    }
    let (frames, dims) = f.data.dim();
    let width = left + right + 1;
    let mut out = Array2::<f64>::zeros((frames, dims * width));
    if frames > 0 {
        for t in 0..frames {
            for o in 0..width {
                let src = (t + o).saturating_sub(left).min(frames - 1);
                out.slice_mut(s![t, o * dims..(o + 1) * dims])
                    .assign(&f.data.row(src));
            }
        }
    }
    Ok(FeatureMatrix {
        data: out,
        spliced: true,
        ..f.clone()
    })
}

/// Recovers the unspliced matrix from the centre block of a symmetric splice.
pub fn unsplice_center(f: &FeatureMatrix, context: usize) -> Result<FeatureMatrix> {
    let width = 2 * context + 1;
    if !f.spliced || !f.dims().is_multiple_of(width) {
        return Err(Error::ShapeMismatch(format!(
            "{} columns are not a {width}-frame splice",
            f.dims()
        )));
    }
    let dims = f.dims() / width;
    Ok(FeatureMatrix {
        data: f
            .data
            .slice(s![.., context * dims..(context + 1) * dims])
            .to_owned(),
        spliced: false,
        ..f.clone()
    })
}
