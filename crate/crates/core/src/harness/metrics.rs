//! Objective scores used in place of recognition error rates.

use rustfft::{num_complex::Complex64, FftPlanner};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::signal::Waveform;

/// Converts natural-log power differences to decibels.
pub const NEPER_POWER_TO_DB: f64 = 10.0 / std::f64::consts::LN_10;
/// Longest alignment lag searched by [`drr_proxy_db`], in seconds.
pub const MAX_ALIGN_LAG_S: f64 = 0.1;
/// Ceiling on the direct-to-residual ratio, in dB.
pub const MAX_DRR_DB: f64 = 100.0;

fn aligned<'a>(reference: &'a FeatureMatrix, test: &'a FeatureMatrix) -> Result<usize> {
    if reference.kind != test.kind {
        return Err(Error::InvalidParameter(format!(
            "cannot compare {} with {} features",
            reference.kind, test.kind
        )));
    }
    if reference.dims() != test.dims() {
        return Err(Error::ShapeMismatch(format!(
            "{} vs {} feature dimensions",
            reference.dims(),
            test.dims()
        )));
    }
    let frames = reference.num_frames().min(test.num_frames());
    if frames == 0 {
        return Err(Error::ShapeMismatch("no frames to compare".into()));
    }
    Ok(frames)
}

/// Mean over frames of the per-frame RMS log difference, in dB.
pub fn log_spectral_distortion(reference: &FeatureMatrix, test: &FeatureMatrix) -> Result<f64> {
    let frames = aligned(reference, test)?;
    let dims = reference.dims() as f64;
    let total: f64 = (0..frames)
        .map(|t| {
            let sq: f64 = reference
                .data
                .row(t)
                .iter()
                .zip(test.data.row(t))
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            (sq / dims).sqrt()
        })
        .sum();
    Ok(NEPER_POWER_TO_DB * total / frames as f64)
}

/// Root mean square difference over all aligned entries, in feature units.
pub fn feature_rmse(reference: &FeatureMatrix, test: &FeatureMatrix) -> Result<f64> {
    let frames = aligned(reference, test)?;
    let sq: f64 = (0..frames)
        .map(|t| {
            reference
                .data
                .row(t)
                .iter()
                .zip(test.data.row(t))
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
        })
        .sum();
    Ok((sq / (frames * reference.dims()) as f64).sqrt())
}

/// `c[lag] = sum_n test[n + lag] reference[n]` for `lag` in `-max_lag..=max_lag`.
fn cross_correlation(test: &[f64], reference: &[f64], max_lag: usize) -> Vec<f64> {
    let n = (test.len() + reference.len() + max_lag).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut a: Vec<Complex64> = test.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    a.resize(n, Complex64::default());
    let mut b: Vec<Complex64> = reference.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    b.resize(n, Complex64::default());
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y.conj();
    }
    inv.process(&mut a);
    let scale = 1.0 / n as f64;
    (0..=2 * max_lag)
        .map(|i| {
            let idx = (i + n - max_lag) % n;
            a[idx].re * scale
        })
        .collect()
}

/// Direct-to-residual energy ratio of `test` against `reference`, in dB.
///
/// The reference is shifted by the lag (up to [`MAX_ALIGN_LAG_S`] either
/// way) that maximizes its correlation with `test`, scaled by least squares,
/// and everything in `test` it does not explain counts as residual.
pub fn drr_proxy_db(test: &Waveform, reference: &Waveform) -> Result<f64> {
    test.check_rate(reference.sample_rate_hz())?;
    let (y, s) = (test.samples(), reference.samples());
    let max_lag = (MAX_ALIGN_LAG_S * test.sample_rate_hz() as f64) as usize;
    let corr = cross_correlation(y, s, max_lag);
    let best = (0..corr.len())
        .max_by(|&a, &b| corr[a].abs().total_cmp(&corr[b].abs()).then(b.cmp(&a)))
        .unwrap_or(max_lag);
    let lag = best as i64 - max_lag as i64;
    // reference sample n sits at test index n + lag
    let shifted_energy: f64 = s
        .iter()
        .enumerate()
        .filter(|(n, _)| {
            let i = *n as i64 + lag;
            i >= 0 && (i as usize) < y.len()
        })
        .map(|(_, v)| v * v)
        .sum();
    if shifted_energy == 0.0 {
        return Err(Error::InvalidParameter("reference is silent".into()));
    }
    let alpha = corr[best] / shifted_energy;
    let direct = alpha * alpha * shifted_energy;
    let mut residual = 0.0;
    for (i, &v) in y.iter().enumerate() {
        let n = i as i64 - lag;
        let model = if n >= 0 && (n as usize) < s.len() {
            alpha * s[n as usize]
        } else {
            0.0
        };
        residual += (v - model).powi(2);
    }
    let cap = direct * 10f64.powf(-MAX_DRR_DB / 10.0);
    if direct == 0.0 {
        return Ok(-MAX_DRR_DB);
    }
    Ok(10.0 * (direct / (residual + cap)).log10())
}

/// Excess-free kurtosis `E[(x - mean)^4] / var^2` (3 for a Gaussian).
pub fn kurtosis(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var == 0.0 {
        return 0.0;
    }
    x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n / (var * var)
}
