//! Single-channel weighted prediction error (WPE) dereverberation.
//!
//! In every STFT bin the late reverberation is predicted from frames at
//! least `delay` frames in the past with a `taps`-long filter, which is
//! re-estimated by weighted least squares under a per-frame variance model
//! `lambda[n] = |x[n]|^2` taken from the previous estimate.

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::signal::{istft, stft, ComplexSpectrogram, StftPlan, Waveform};

#[derive(Debug, Clone, PartialEq)]
pub struct WpeParams {
    /// Prediction delay in frames.
    pub delay: usize,
    /// Prediction filter length per bin.
    pub taps: usize,
    pub iterations: usize,
    /// Variance floor as a fraction of the bin's mean power.
    pub variance_floor: f64,
    /// Diagonal loading as a fraction of the normal matrix's mean diagonal.
    pub loading: f64,
    pub frame_ms: f64,
    pub hop_ms: f64,
}

impl Default for WpeParams {
    fn default() -> Self {
        Self {
            delay: 3,
            taps: 10,
            iterations: 3,
            variance_floor: 1e-8,
            loading: 1e-6,
            frame_ms: 32.0,
            hop_ms: 8.0,
        }
    }
}

impl WpeParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.delay == 0 {
            return bad("prediction delay must be at least 1 frame");
        }
        if self.taps == 0 {
            return bad("need at least one prediction tap");
        }
        if self.iterations == 0 {
            return bad("need at least one iteration");
        }
        if !(self.variance_floor > 0.0) || !(self.loading >= 0.0) {
            return bad("variance floor must be positive and loading non-negative");
        }
        if !(self.hop_ms > 0.0 && self.frame_ms >= self.hop_ms) {
            return bad("need frame_ms >= hop_ms > 0");
        }
        Ok(())
    }

    /// Minimum number of STFT frames a bin sequence must have.
    pub fn min_frames(&self) -> usize {
        self.delay + self.taps + 1
    }

    pub fn plan(&self, sample_rate_hz: u32) -> Result<StftPlan> {
        StftPlan::hann_ms(sample_rate_hz, self.frame_ms, self.hop_ms)
    }
}

/// Result of dereverberating one bin.
#[derive(Debug, Clone, PartialEq)]
pub struct BinOutcome {
    pub output: Vec<Complex64>,
    /// Final prediction filter.
    pub filter: Vec<Complex64>,
    /// `sum_n log lambda[n]` for the variances used by each iteration,
    /// followed by the value implied by the final output.
    pub log_variance: Vec<f64>,
}

fn log_variance_sum(x: &[Complex64], floor: f64) -> f64 {
    x.iter().map(|v| v.norm_sqr().max(floor).ln()).sum()
}

/// Solves `A z = b` for Hermitian positive definite `A` (row-major, `k x k`)
/// by Cholesky factorization.
fn solve_hermitian(a: &[Complex64], b: &[Complex64], k: usize) -> Result<Vec<Complex64>> {
    let mut l = vec![Complex64::default(); k * k];
    for j in 0..k {
        let mut diag = a[j * k + j].re;
        for p in 0..j {
            diag -= l[j * k + p].norm_sqr();
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(Error::Singular);
        }
        let d = diag.sqrt();
        l[j * k + j] = Complex64::new(d, 0.0);
        for i in j + 1..k {
            let mut s = a[i * k + j];
            for p in 0..j {
                s -= l[i * k + p] * l[j * k + p].conj();
            }
            l[i * k + j] = s / d;
        }
    }
    let mut z = b.to_vec();
    for i in 0..k {
        let mut s = z[i];
        for p in 0..i {
            s -= l[i * k + p] * z[p];
        }
        z[i] = s / l[i * k + i];
    }
    for i in (0..k).rev() {
        let mut s = z[i];
        for p in i + 1..k {
            s -= l[p * k + i].conj() * z[p];
        }
        z[i] = s / l[i * k + i];
    }
    Ok(z)
}

/// Iterative WPE on one bin's frame sequence, with diagnostics.
pub fn wpe_bin(y: &[Complex64], params: &WpeParams) -> Result<BinOutcome> {
    params.validate()?;
    let n = y.len();
    let (delay, k) = (params.delay, params.taps);
    if n < params.min_frames() {
        return Err(Error::TooShort {
            needed: params.min_frames(),
            got: n,
        });
    }
    if y.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::InvalidParameter(
            "bin contains non-finite values".into(),
        ));
    }
    let mean_power = y.iter().map(|v| v.norm_sqr()).sum::<f64>() / n as f64;
    if mean_power == 0.0 {
        return Ok(BinOutcome {
            output: y.to_vec(),
            filter: vec![Complex64::default(); k],
            log_variance: vec![0.0; params.iterations + 1],
        });
    }
    let floor = params.variance_floor * mean_power;
    // regressor tap j at frame t is y[t - delay - j]
    let past = |t: usize, j: usize| -> Complex64 {
        if t >= delay + j {
            y[t - delay - j]
        } else {
            Complex64::default()
        }
    };

    let mut estimate = y.to_vec();
    let mut filter = vec![Complex64::default(); k];
    let mut log_variance = Vec::with_capacity(params.iterations + 1);
    let mut normal = vec![Complex64::default(); k * k];
    let mut rhs = vec![Complex64::default(); k];
    let mut stacked = vec![Complex64::default(); k];
    for _ in 0..params.iterations {
        log_variance.push(log_variance_sum(&estimate, floor));
        normal.fill(Complex64::default());
        rhs.fill(Complex64::default());
        for t in delay..n {
            let weight = 1.0 / estimate[t].norm_sqr().max(floor);
            for (j, s) in stacked.iter_mut().enumerate() {
                *s = past(t, j);
            }
            let target = y[t].conj() * weight;
            for i in 0..k {
                let si = stacked[i] * weight;
                if si == Complex64::default() {
                    continue;
                }
                for j in i..k {
                    normal[i * k + j] += si * stacked[j].conj();
                }
                rhs[i] += stacked[i] * target;
            }
        }
        for i in 0..k {
            for j in 0..i {
                normal[i * k + j] = normal[j * k + i].conj();
            }
        }
        let trace: f64 = (0..k).map(|i| normal[i * k + i].re).sum();
        if trace <= 0.0 {
            filter.fill(Complex64::default());
            estimate.copy_from_slice(y);
            continue;
        }
        let load = params.loading * trace / k as f64;
        for i in 0..k {
            normal[i * k + i] += load;
        }
        filter = solve_hermitian(&normal, &rhs, k)?;
        for t in 0..n {
            let mut predicted = Complex64::default();
            for (j, g) in filter.iter().enumerate() {
                predicted += g.conj() * past(t, j);
            }
            estimate[t] = y[t] - predicted;
        }
    }
    log_variance.push(log_variance_sum(&estimate, floor));
    Ok(BinOutcome {
        output: estimate,
        filter,
        log_variance,
    })
}

/// Iterative WPE on one bin's frame sequence.
pub fn wpe_iterate_bin(y: &[Complex64], params: &WpeParams) -> Result<Vec<Complex64>> {
    wpe_bin(y, params).map(|o| o.output)
}

/// Dereverberated spectrogram and the bin-averaged log-variance trace.
#[derive(Debug, Clone)]
pub struct WpeOutcome {
    pub spectrogram: ComplexSpectrogram,
    pub mean_log_variance: Vec<f64>,
}

/// Runs WPE on every bin of `spec` independently.
pub fn wpe_spectrogram(spec: &ComplexSpectrogram, params: &WpeParams) -> Result<WpeOutcome> {
    params.validate()?;
    let bins = spec.num_bins();
    let columns: Vec<Vec<Complex64>> = (0..bins).map(|b| spec.data.column(b).to_vec()).collect();
    let outcomes: Vec<BinOutcome> = columns
        .par_iter()
        .map(|col| wpe_bin(col, params))
        .collect::<Result<_>>()?;
    let frames = spec.num_frames();
    let mut data = Array2::<Complex64>::zeros((frames, bins));
    let mut mean_log_variance = vec![0.0; params.iterations + 1];
    for (b, o) in outcomes.iter().enumerate() {
        for (t, v) in o.output.iter().enumerate() {
            data[[t, b]] = *v;
        }
        for (acc, v) in mean_log_variance.iter_mut().zip(&o.log_variance) {
            *acc += v / bins as f64;
        }
    }
    Ok(WpeOutcome {
        spectrogram: ComplexSpectrogram {
            data,
            plan: spec.plan.clone(),
            sample_rate_hz: spec.sample_rate_hz,
        },
        mean_log_variance,
    })
}

/// WPE dereverberation plus the bin-averaged log-variance per iteration.
///
/// The signal is zero-padded by `frame_len - hop` samples at the front and
/// at least as much at the back, so every input sample lies under the full
/// window overlap and the overlap-add normalization never divides by the
/// near-zero window tails.
pub fn wpe_dereverb_traced(wave: &Waveform, params: &WpeParams) -> Result<(Waveform, Vec<f64>)> {
    params.validate()?;
    let plan = params.plan(wave.sample_rate_hz())?;
    let needed = plan.output_len(params.min_frames());
    if wave.len() < needed {
        return Err(Error::TooShort {
            needed,
            got: wave.len(),
        });
    }
    let margin = plan.frame_len() - plan.hop();
    let total = plan.padded_len(wave.len() + 2 * margin);
    let mut padded = vec![0.0; total];
    padded[margin..margin + wave.len()].copy_from_slice(wave.samples());
    let spec = stft(&Waveform::new(padded, wave.sample_rate_hz())?, &plan)?;
    let outcome = wpe_spectrogram(&spec, params)?;
    let out = istft(&outcome.spectrogram)?;
    let trimmed = out.samples()[margin..margin + wave.len()].to_vec();
    Ok((
        Waveform::new(trimmed, wave.sample_rate_hz())?,
        outcome.mean_log_variance,
    ))
}

/// WPE dereverberation; output has the input's length.
pub fn wpe_dereverb(wave: &Waveform, params: &WpeParams) -> Result<Waveform> {
    wpe_dereverb_traced(wave, params).map(|(w, _)| w)
}
