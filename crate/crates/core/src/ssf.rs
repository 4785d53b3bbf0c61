//! Steady-state suppression (SSF, Type II) on gammatone band powers.
//!
//! Per band, a first-order lowpass `M` tracks the frame power `P`; the
//! processed power `max(P - M, c0 M)` keeps onsets and pushes steady or
//! decaying segments down to a floor proportional to `M`. The ratio of
//! processed to original power becomes an amplitude gain, smoothed across
//! neighbouring channels and applied through the gammatone resynthesis.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::signal::{
    gammatone_analyze, gammatone_resynth, EnvelopeDomain, GammatoneBank, SubbandEnvelope, Waveform,
};

/// Guards the gain ratio on silent bands.
pub const POWER_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SsfParams {
    /// Forgetting factor of the lower-envelope lowpass.
    pub lambda: f64,
    /// Floor coefficient applied to the lowpassed power.
    pub c0: f64,
    pub window_ms: f64,
    pub hop_ms: f64,
    pub bank: GammatoneBank,
}

impl SsfParams {
    pub fn new(sample_rate_hz: u32) -> Result<Self> {
        Ok(Self {
            lambda: 0.4,
            c0: 0.01,
            window_ms: 50.0,
            hop_ms: 10.0,
            bank: GammatoneBank::default_for(sample_rate_hz)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda must lie in (0, 1), got {}",
                self.lambda
            )));
        }
        if !(self.c0 > 0.0 && self.c0 < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "c0 must lie in (0, 1), got {}",
                self.c0
            )));
        }
        if !(self.hop_ms > 0.0 && self.window_ms >= self.hop_ms) {
            return Err(Error::InvalidParameter(
                "need window_ms >= hop_ms > 0".into(),
            ));
        }
        Ok(())
    }
}

/// `M[b,0] = P[b,0]`, `M[b,m] = lambda M[b,m-1] + (1 - lambda) P[b,m]`.
pub fn ssf_lowpass(power: &SubbandEnvelope, lambda: f64) -> Result<SubbandEnvelope> {
    if power.domain() != EnvelopeDomain::Power {
        return Err(Error::InvalidParameter(
            "lowpass expects band powers".into(),
        ));
    }
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::InvalidParameter(format!(
            "lambda {lambda} outside [0, 1)"
        )));
    }
    let p = power.data();
    let mut m = Array2::<f64>::zeros(p.dim());
    for (src, mut dst) in p.rows().into_iter().zip(m.rows_mut()) {
        let mut acc = 0.0;
        for (i, (&pv, d)) in src.iter().zip(dst.iter_mut()).enumerate() {
            acc = if i == 0 {
                pv
            } else {
                lambda * acc + (1.0 - lambda) * pv
            };
            *d = acc;
        }
    }
    power.with_data(m, EnvelopeDomain::Power)
}

/// `max(P - M, c0 M)` elementwise.
pub fn ssf_type2(
    power: &SubbandEnvelope,
    lowpassed: &SubbandEnvelope,
    c0: f64,
) -> Result<SubbandEnvelope> {
    if power.data().dim() != lowpassed.data().dim() {
        return Err(Error::ShapeMismatch(format!(
            "power {:?} vs lowpassed {:?}",
            power.data().dim(),
            lowpassed.data().dim()
        )));
    }
    let mut out = power.data().clone();
    ndarray::Zip::from(&mut out)
        .and(lowpassed.data())
        .for_each(|p, &m| *p = (*p - m).max(c0 * m).max(0.0));
    power.with_data(out, EnvelopeDomain::Power)
}

/// Amplitude gains `sqrt(P~ / P)`, capped at one and smoothed with a
/// (1, 2, 1)/4 kernel across channels.
pub fn ssf_gains(power: &SubbandEnvelope, processed: &SubbandEnvelope) -> Result<SubbandEnvelope> {
    if power.data().dim() != processed.data().dim() {
        return Err(Error::ShapeMismatch("gain inputs differ in shape".into()));
    }
    let mut raw = processed.data().clone();
    ndarray::Zip::from(&mut raw)
        .and(power.data())
        .for_each(|g, &p| *g = (*g / p.max(POWER_EPS)).sqrt().min(1.0));

    let (channels, frames) = raw.dim();
    let mut smoothed = Array2::<f64>::zeros((channels, frames));
    for b in 0..channels {
        for m in 0..frames {
            let mut acc = 2.0 * raw[[b, m]];
            let mut weight = 2.0;
            if b > 0 {
                acc += raw[[b - 1, m]];
                weight += 1.0;
            }
            if b + 1 < channels {
                acc += raw[[b + 1, m]];
                weight += 1.0;
            }
            smoothed[[b, m]] = acc / weight;
        }
    }
    power.with_data(smoothed, EnvelopeDomain::Gain)
}

/// Full SSF Type II pass; output has the input's length.
pub fn ssf_enhance(wave: &Waveform, params: &SsfParams) -> Result<Waveform> {
    params.validate()?;
    let window = (params.window_ms * 1e-3 * wave.sample_rate_hz() as f64).round() as usize;
    if wave.len() < window {
        return Err(Error::TooShort {
            needed: window,
            got: wave.len(),
        });
    }
    let power = gammatone_analyze(
        wave,
        &params.bank,
        params.window_ms,
        params.hop_ms,
        EnvelopeDomain::Power,
    )?;
    let lowpassed = ssf_lowpass(&power, params.lambda)?;
    let processed = ssf_type2(&power, &lowpassed, params.c0)?;
    let gains = ssf_gains(&power, &processed)?;
    gammatone_resynth(wave, &params.bank, &gains)
}
