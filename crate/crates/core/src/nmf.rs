//! Sub-band non-negative deconvolution of gammatone magnitude envelopes.
//!
//! Each band's envelope `y` is modelled as a clean envelope `x` convolved
//! with a short non-negative filter `h`, estimated by alternating
//! multiplicative updates of
//! `J(x, h) = sum (y - x*h)^2 + lambda_s sum x`.
//! The enhancer turns `x / y` into a bounded band gain.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::signal::{
    gammatone_analyze, gammatone_resynth, EnvelopeDomain, GammatoneBank, SubbandEnvelope, Waveform,
};

/// Guards ratios against empty denominators.
const TINY: f64 = 1e-300;
/// Envelope floor used when converting the estimate to a gain.
pub const ENVELOPE_EPS: f64 = 1e-12;

/// Weight of the sparsity penalty on the clean envelope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SparsityWeight {
    /// Multiple of the mean of the envelope being deconvolved.
    RelativeToMean(f64),
    Absolute(f64),
}

impl SparsityWeight {
    fn resolve(self, y: &[f64]) -> f64 {
        match self {
            Self::RelativeToMean(f) => f * y.iter().sum::<f64>() / y.len().max(1) as f64,
            Self::Absolute(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmfParams {
    /// Filter length in envelope frames.
    pub filter_len: usize,
    pub sparsity: SparsityWeight,
    pub iterations: usize,
    /// Stop once the relative objective decrease falls below this.
    pub tol: f64,
    /// Lower clip of the applied band gain.
    pub gain_floor: f64,
    pub window_ms: f64,
    pub hop_ms: f64,
    pub bank: GammatoneBank,
}

impl NmfParams {
    pub fn new(sample_rate_hz: u32) -> Result<Self> {
        Ok(Self {
            filter_len: 25,
            sparsity: SparsityWeight::RelativeToMean(0.05),
            iterations: 100,
            tol: 1e-5,
            gain_floor: 0.1,
            window_ms: 25.0,
            hop_ms: 10.0,
            bank: GammatoneBank::default_for(sample_rate_hz)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.filter_len == 0 {
            return bad("filter length must be at least 1");
        }
        if self.iterations == 0 {
            return bad("need at least one iteration");
        }
        let weight = match self.sparsity {
            SparsityWeight::RelativeToMean(v) | SparsityWeight::Absolute(v) => v,
        };
        if !(weight >= 0.0 && weight.is_finite()) {
            return bad("sparsity weight must be finite and non-negative");
        }
        if !(self.tol >= 0.0) {
            return bad("tolerance must be non-negative");
        }
        if !(self.gain_floor > 0.0 && self.gain_floor <= 1.0) {
            return bad("gain floor must lie in (0, 1]");
        }
        if !(self.hop_ms > 0.0 && self.window_ms >= self.hop_ms) {
            return bad("need window_ms >= hop_ms > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeconvResult {
    /// Clean envelope estimate, in the scale where `h` sums to one.
    pub x: Vec<f64>,
    /// Filter estimate with unit sum.
    pub h: Vec<f64>,
    /// Objective before the first and after every iteration.
    pub objective: Vec<f64>,
}

/// `(x*h)[n]` truncated to `x.len()` samples.
fn conv_trunc(x: &[f64], h: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for (k, &hk) in h.iter().enumerate() {
        if hk == 0.0 {
            continue;
        }
        for (o, &xv) in out[k..].iter_mut().zip(x) {
            *o += hk * xv;
        }
    }
}

/// Adjoint of convolution with `h`: `out[n] = sum_k h[k] r[n + k]`.
fn corr_filter(h: &[f64], r: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    let n = r.len();
    for (k, &hk) in h.iter().enumerate().take(n) {
        for (o, &rv) in out[..n - k].iter_mut().zip(&r[k..]) {
            *o += hk * rv;
        }
    }
}

/// Adjoint of convolution with `x`: `out[k] = sum_n x[n - k] r[n]`.
fn corr_signal(x: &[f64], r: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (k, o) in out.iter_mut().enumerate() {
        *o = if k < n {
            x[..n - k].iter().zip(&r[k..]).map(|(a, b)| a * b).sum()
        } else {
            0.0
        };
    }
}

fn misfit(y: &[f64], fit: &[f64], scale: f64) -> f64 {
    y.iter()
        .zip(fit)
        .map(|(a, b)| (a - scale * b).powi(2))
        .sum()
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Alternating multiplicative-update deconvolution of one envelope.
///
/// Internally `h` is kept at unit Euclidean norm: with a unit-sum filter
/// every exact factorization has the same penalty (`sum x = sum y`), so the
/// sparsity term cannot pick the right one. Each update is accepted only if
/// it does not increase the objective, which makes the trace non-increasing
/// in floating point as well. The result is rescaled to a unit-sum filter.
pub fn nnconv_deconv(y: &[f64], params: &NmfParams) -> Result<DeconvResult> {
    params.validate()?;
    let k = params.filter_len;
    if y.len() <= k {
        return Err(Error::TooShort {
            needed: k + 1,
            got: y.len(),
        });
    }
    if let Some(bad) = y.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "envelope must be finite and non-negative, found {bad}"
        )));
    }
    let n = y.len();
    if y.iter().all(|&v| v == 0.0) {
        return Ok(DeconvResult {
            x: vec![0.0; n],
            h: vec![1.0 / k as f64; k],
            objective: vec![0.0],
        });
    }
    let lambda = params.sparsity.resolve(y);
    let objective = |fit_err: f64, x: &[f64]| fit_err + lambda * x.iter().sum::<f64>();

    let mut x = y.to_vec();
    let mut h = vec![1.0 / (k as f64).sqrt(); k];
    let mut fit = vec![0.0; n];
    conv_trunc(&x, &h, &mut fit);
    let mut current = objective(misfit(y, &fit, 1.0), &x);
    let mut trace = vec![current];

    let mut num_x = vec![0.0; n];
    let mut den_x = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut fit_new = vec![0.0; n];
    let mut num_h = vec![0.0; k];
    let mut den_h = vec![0.0; k];
    let mut h_new = vec![0.0; k];

    for _ in 0..params.iterations {
        let previous = current;

        corr_filter(&h, y, &mut num_x);
        corr_filter(&h, &fit, &mut den_x);
        for i in 0..n {
            let den = den_x[i] + lambda;
            x_new[i] = if den > TINY {
                x[i] * num_x[i] / den
            } else {
                x[i]
            };
        }
        conv_trunc(&x_new, &h, &mut fit_new);
        let candidate = objective(misfit(y, &fit_new, 1.0), &x_new);
        if candidate <= current {
            std::mem::swap(&mut x, &mut x_new);
            std::mem::swap(&mut fit, &mut fit_new);
            current = candidate;
        }

        corr_signal(&x, y, &mut num_h);
        corr_signal(&x, &fit, &mut den_h);
        for j in 0..k {
            h_new[j] = if den_h[j] > TINY {
                h[j] * num_h[j] / den_h[j]
            } else {
                h[j]
            };
        }
        let norm = l2(&h_new);
        if norm > TINY {
            h_new.iter_mut().for_each(|v| *v /= norm);
            conv_trunc(&x, &h_new, &mut fit_new);
            // the raw update's fit is `norm` times the normalized filter's fit
            let sum_x: f64 = x.iter().sum();
            let absorbed = misfit(y, &fit_new, norm) + lambda * norm * sum_x;
            let kept = misfit(y, &fit_new, 1.0) + lambda * sum_x;
            if absorbed <= kept && absorbed <= current {
                x.iter_mut().for_each(|v| *v *= norm);
                fit_new.iter_mut().for_each(|v| *v *= norm);
                std::mem::swap(&mut h, &mut h_new);
                std::mem::swap(&mut fit, &mut fit_new);
                current = absorbed;
            } else if kept <= current {
                std::mem::swap(&mut h, &mut h_new);
                std::mem::swap(&mut fit, &mut fit_new);
                current = kept;
            }
        }

        trace.push(current);
        if previous > 0.0 && (previous - current) / previous < params.tol {
            break;
        }
    }

    let total: f64 = h.iter().sum();
    if total > TINY {
        h.iter_mut().for_each(|v| *v /= total);
        x.iter_mut().for_each(|v| *v *= total);
    }
    Ok(DeconvResult {
        x,
        h,
        objective: trace,
    })
}

/// Per-band amplitude gains `x / y`, clipped to `[gain_floor, 1]`.
pub fn nmf_gains(envelope: &SubbandEnvelope, params: &NmfParams) -> Result<SubbandEnvelope> {
    let rows: Vec<Vec<f64>> = envelope
        .data()
        .rows()
        .into_iter()
        .map(|r| r.to_vec())
        .collect();
    let gains: Vec<Vec<f64>> = rows
        .par_iter()
        .map(|y| {
            let res = nnconv_deconv(y, params)?;
            Ok(res
                .x
                .iter()
                .zip(y)
                .map(|(xv, yv)| (xv / yv.max(ENVELOPE_EPS)).clamp(params.gain_floor, 1.0))
                .collect())
        })
        .collect::<Result<_>>()?;
    let frames = envelope.num_frames();
    let flat: Vec<f64> = gains.into_iter().flatten().collect();
    let data = ndarray::Array2::from_shape_vec((rows.len(), frames), flat)
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    envelope.with_data(data, EnvelopeDomain::Gain)
}

/// Dereverberates `wave` band by band; output has the input's length.
pub fn nmf_dereverb(wave: &Waveform, params: &NmfParams) -> Result<Waveform> {
    params.validate()?;
    let envelope = gammatone_analyze(
        wave,
        &params.bank,
        params.window_ms,
        params.hop_ms,
        EnvelopeDomain::Magnitude,
    )?;
    if envelope.num_frames() <= params.filter_len {
        return Err(Error::TooShort {
            needed: params.filter_len + 1,
            got: envelope.num_frames(),
        });
    }
    let gains = nmf_gains(&envelope, params)?;
    gammatone_resynth(wave, &params.bank, &gains)
}
