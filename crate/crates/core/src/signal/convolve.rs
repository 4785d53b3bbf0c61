use num_complex::Complex64;
use rustfft::FftPlanner;

use super::{next_pow2, Waveform};
use crate::error::Result;

// Below this many output samples the direct sum is cheaper than three FFTs.
const DIRECT_LIMIT: usize = 64;

/// Full linear convolution; output length is `len(wave) + len(rir) - 1`.
pub fn convolve(wave: &Waveform, rir: &Waveform) -> Result<Waveform> {
    wave.check_rate(rir.sample_rate_hz())?;
    Waveform::new(
        convolve_samples(wave.samples(), rir.samples()),
        wave.sample_rate_hz(),
    )
}

pub fn convolve_samples(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    if a.len().min(b.len()) <= DIRECT_LIMIT {
        let mut out = vec![0.0; out_len];
        for (i, &x) in a.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (o, &y) in out[i..].iter_mut().zip(b) {
                *o += x * y;
            }
        }
        return out;
    }

    let n = next_pow2(out_len);
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    let mut fa: Vec<Complex64> = a.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fa.resize(n, Complex64::default());
    let mut fb: Vec<Complex64> = b.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fb.resize(n, Complex64::default());
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    let scale = 1.0 / n as f64;
    fa[..out_len].iter().map(|c| c.re * scale).collect()
}
