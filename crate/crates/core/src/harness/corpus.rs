//! Synthetic "desk" utterances: syllable-like bursts of formant-filtered
//! noise separated by pauses, so the whole pipeline runs without external
//! recordings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rir::room_seed;
use crate::signal::Waveform;

/// RMS level every synthetic utterance is scaled to.
pub const CORPUS_RMS: f64 = 0.05;
/// Background noise level relative to the utterance RMS.
pub const NOISE_FLOOR_DB: f64 = -50.0;

/// Two-pole resonator at `freq_hz` with bandwidth `bw_hz`, unit peak gain.
fn resonate(x: &[f64], freq_hz: f64, bw_hz: f64, fs: f64) -> Vec<f64> {
    let r = (-std::f64::consts::PI * bw_hz / fs).exp();
    let theta = std::f64::consts::TAU * freq_hz / fs;
    let (a1, a2) = (2.0 * r * theta.cos(), -r * r);
    let gain = (1.0 - r) * (1.0 - 2.0 * r * (2.0 * theta).cos() + r * r).sqrt();
    let (mut y1, mut y2) = (0.0, 0.0);
    x.iter()
        .map(|&v| {
            let y = gain * v + a1 * y1 + a2 * y2;
            y2 = y1;
            y1 = y;
            y
        })
        .collect()
}

/// One utterance of 2 to 5 seconds.
pub fn synth_utterance(seed: u64, sample_rate_hz: u32) -> Result<Waveform> {
    if sample_rate_hz < 8000 {
        return Err(Error::InvalidParameter(format!(
            "synthetic speech needs at least 8 kHz, got {sample_rate_hz}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs = sample_rate_hz as f64;
    let len = (rng.random_range(2.0..5.0) * fs) as usize;
    let mut out = vec![0.0; len];
    let mut t = (rng.random_range(0.1..0.3) * fs) as usize;
    while t < len {
        let dur = (rng.random_range(0.12..0.32) * fs) as usize;
        let end = (t + dur).min(len);
        let n = end - t;
        let excitation: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let mut syllable = vec![0.0; n];
        let formants = [
            (rng.random_range(300.0..850.0), 80.0),
            (rng.random_range(900.0..2300.0), 120.0),
            (rng.random_range(2400.0..3400.0), 180.0),
        ];
        for (i, (f, bw)) in formants.into_iter().enumerate() {
            let weight = [1.0, 0.6, 0.3][i];
            for (s, v) in syllable.iter_mut().zip(resonate(&excitation, f, bw, fs)) {
                *s += weight * v;
            }
        }
        // fast attack, slower decay, with a mild 4-7 Hz tremolo
        let rate = rng.random_range(4.0..7.0);
        let level = rng.random_range(0.4..1.0);
        let attack = (0.02 * fs) as usize;
        for (i, s) in syllable.iter_mut().enumerate() {
            let rise = (i as f64 / attack as f64).min(1.0);
            let fall = (1.0 - i as f64 / n as f64).powf(0.7);
            let am = 1.0 + 0.3 * (std::f64::consts::TAU * rate * i as f64 / fs).sin();
            *s *= level * rise * fall * am;
        }
        for (o, s) in out[t..end].iter_mut().zip(&syllable) {
            *o += s;
        }
        t = end + (rng.random_range(0.05..0.25) * fs) as usize;
    }
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
    let floor = CORPUS_RMS * 10f64.powf(NOISE_FLOOR_DB / 20.0);
    for v in out.iter_mut() {
        *v = *v * CORPUS_RMS / rms + floor * rng.sample::<f64, _>(StandardNormal);
    }
    Waveform::new(out, sample_rate_hz)
}

/// `count` utterances; utterance `i` depends only on `(seed, i)`.
pub fn synth_corpus(count: usize, seed: u64, sample_rate_hz: u32) -> Result<Vec<Waveform>> {
    (0..count)
        .map(|i| synth_utterance(room_seed(seed, i), sample_rate_hz))
        .collect()
}
