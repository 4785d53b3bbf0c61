//! Schroeder energy-decay analysis.

use crate::error::{Error, Result};
use crate::signal::Waveform;

/// Decay segment used for the T20 fit, in dB below the total energy.
pub const FIT_START_DB: f64 = -5.0;
pub const FIT_END_DB: f64 = -25.0;

const MIN_FIT_POINTS: usize = 8;

/// Backward-integrated energy decay curve in dB relative to total energy.
///
/// Entries after the last non-zero sample are `-inf`.
pub fn schroeder_curve_db(rir: &[f64]) -> Vec<f64> {
    let mut tail = vec![0.0; rir.len()];
    let mut acc = 0.0;
    for (t, h) in tail.iter_mut().zip(rir).rev() {
        acc += h * h;
        *t = acc;
    }
    let total = acc;
    if total <= 0.0 {
        return vec![f64::NEG_INFINITY; rir.len()];
    }
    tail.iter().map(|e| 10.0 * (e / total).log10()).collect()
}

/// RT60 by least-squares fit of the energy-decay curve between -5 and -25 dB,
/// extrapolated to 60 dB.
pub fn estimate_rt60(rir: &Waveform) -> Result<f64> {
    if rir.energy() <= 0.0 {
        return Err(Error::InsufficientDecay(
            "impulse response is silent".into(),
        ));
    }
    let edc = schroeder_curve_db(rir.samples());
    let start = edc.iter().position(|&d| d <= FIT_START_DB);
    let end = edc.iter().position(|&d| d <= FIT_END_DB);
    let (start, end) = match (start, end) {
        (Some(s), Some(e)) if e >= s + MIN_FIT_POINTS => (s, e),
        _ => {
            return Err(Error::InsufficientDecay(format!(
                "no {:.0} dB decay segment between {FIT_START_DB} and {FIT_END_DB} dB",
                FIT_START_DB - FIT_END_DB
            )))
        }
    };
    let fs = rir.sample_rate_hz() as f64;
    let n = (end - start) as f64;
    let (mut st, mut sy) = (0.0, 0.0);
    for (i, &d) in edc[start..end].iter().enumerate() {
        st += (start + i) as f64 / fs;
        sy += d;
    }
    let (mt, my) = (st / n, sy / n);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &d) in edc[start..end].iter().enumerate() {
        let dt = (start + i) as f64 / fs - mt;
        sxy += dt * (d - my);
        sxx += dt * dt;
    }
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return Err(Error::InsufficientDecay("energy does not decay".into()));
    }
    Ok(-60.0 / slope)
}
