//! Allen-Berkley image-source simulation for a shoebox room.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rayon::prelude::*;

use super::{RoomSpec, SPEED_OF_SOUND_M_S};
use crate::error::{Error, Result};
use crate::signal::Waveform;

/// Taps of the fractional-delay interpolator (odd, centred on the integer delay).
pub const INTERP_TAPS: usize = 81;
const HALF_TAPS: i64 = (INTERP_TAPS / 2) as i64;
const PHASES: usize = 2048;
/// Cutoff of the second-order high-pass applied after the image sum. Every
/// image adds a positive pulse, so the raw sum carries a slowly decaying
/// low-frequency bias that lengthens the measured decay.
pub const HIGHPASS_CUTOFF_HZ: f64 = 100.0;

/// Hann-windowed sinc, one row of `INTERP_TAPS` per fractional phase.
fn interp_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let half_width = (HALF_TAPS + 1) as f64;
        let mut table = Vec::with_capacity((PHASES + 1) * INTERP_TAPS);
        for p in 0..=PHASES {
            let frac = p as f64 / PHASES as f64;
            for j in -HALF_TAPS..=HALF_TAPS {
                let t = j as f64 - frac;
                let sinc = if t.abs() < 1e-12 {
                    1.0
                } else {
                    (PI * t).sin() / (PI * t)
                };
                let w = 0.5 * (1.0 + (PI * t / half_width).cos());
                table.push(sinc * w);
            }
        }
        table
    })
}

/// One axis worth of image offsets: squared distance component and reflection gain.
fn axis_images(
    src: f64,
    mic: f64,
    len: f64,
    beta_low: f64,
    beta_high: f64,
    reach: f64,
) -> Vec<(f64, f64)> {
    let n = (reach / (2.0 * len)).ceil() as i64 + 1;
    let mut out = Vec::with_capacity((4 * n + 2) as usize);
    for m in -n..=n {
        for q in 0..=1i64 {
            let pos = (1 - 2 * q) as f64 * src + 2.0 * m as f64 * len;
            let d = pos - mic;
            if d.abs() > reach {
                continue;
            }
            let gain = beta_low.powi((m - q).abs() as i32) * beta_high.powi(m.abs() as i32);
            out.push((d * d, gain));
        }
    }
    out
}

/// Room impulse response of `rir_len_s` seconds; image order is bounded so that
/// every image arriving within the response is included.
pub fn image_method_rir(spec: &RoomSpec, sample_rate_hz: u32, rir_len_s: f64) -> Result<Waveform> {
    if !(rir_len_s > 0.0) || sample_rate_hz == 0 {
        return Err(Error::InvalidParameter(format!(
            "need positive length and rate, got {rir_len_s} s at {sample_rate_hz} Hz"
        )));
    }
    spec.validate_geometry()?;
    let fs = sample_rate_hz as f64;
    let c = SPEED_OF_SOUND_M_S;
    if spec.distance_m < c / fs {
        return Err(Error::InvalidParameter(format!(
            "source and microphone {} m apart, closer than one sample ({} m)",
            spec.distance_m,
            c / fs
        )));
    }
    let n_samples = (rir_len_s * fs).ceil() as usize;
    // images whose interpolation kernel could still reach the last sample
    let reach = (n_samples as f64 + HALF_TAPS as f64) * c / fs;
    let reach_sq = reach * reach;

    let [l, w, h] = spec.dims_m;
    let b = spec.reflection_coeffs;
    let (s, m) = (spec.source_pos_m, spec.mic_pos_m);
    let xs = axis_images(s[0], m[0], l, b[0], b[1], reach);
    let ys = axis_images(s[1], m[1], w, b[2], b[3], reach);
    let zs = axis_images(s[2], m[2], h, b[4], b[5], reach);
    let table = interp_table();
    let scale = fs / c;

    let partials: Vec<Vec<f64>> = xs
        .par_iter()
        .map(|&(dx2, gx)| {
            let mut buf = vec![0.0; n_samples];
            for &(dy2, gy) in &ys {
                let dxy2 = dx2 + dy2;
                if dxy2 > reach_sq {
                    continue;
                }
                let gxy = gx * gy;
                for &(dz2, gz) in &zs {
                    let d2 = dxy2 + dz2;
                    if d2 > reach_sq {
                        continue;
                    }
                    let gain = gxy * gz;
                    if gain == 0.0 {
                        continue;
                    }
                    let dist = d2.sqrt();
                    let amp = gain / (4.0 * PI * dist);
                    let tau = dist * scale;
                    let base = tau.floor();
                    let phase = ((tau - base) * PHASES as f64).round() as usize;
                    let row = &table[phase * INTERP_TAPS..(phase + 1) * INTERP_TAPS];
                    let first = base as i64 - HALF_TAPS;
                    let lo = (-first).max(0) as usize;
                    let hi = (n_samples as i64 - first).clamp(0, INTERP_TAPS as i64) as usize;
                    for k in lo..hi {
                        buf[(first + k as i64) as usize] += amp * row[k];
                    }
                }
            }
            buf
        })
        .collect();

    // fixed summation order keeps the output independent of scheduling
    let mut out = vec![0.0; n_samples];
    for p in &partials {
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    highpass_in_place(&mut out, HIGHPASS_CUTOFF_HZ / fs);
    Waveform::new(out, sample_rate_hz)
}

/// Two-pole, two-zero DC-blocking filter with cutoff `cutoff` in cycles per
/// sample: zeros at DC and at the pole radius, poles at `exp(-w)` angle `w`.
fn highpass_in_place(x: &mut [f64], cutoff: f64) {
    let w = 2.0 * PI * cutoff;
    let r = (-w).exp();
    let b1 = 2.0 * r * w.cos();
    let b2 = -r * r;
    let a1 = -(1.0 + r);
    let (mut y1, mut y2) = (0.0, 0.0);
    for v in x.iter_mut() {
        let y0 = b1 * y1 + b2 * y2 + *v;
        *v = y0 + a1 * y1 + r * y2;
        y2 = y1;
        y1 = y0;
    }
}
