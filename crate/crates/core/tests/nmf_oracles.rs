use proptest::prelude::*;
use revfront::harness::{grid_conditions, kurtosis, reverberate, synth_utterance, GridConfig};
use revfront::nmf::{nmf_dereverb, nnconv_deconv, NmfParams, SparsityWeight};
use revfront::signal::gammatone::{gammatone_analyze, EnvelopeDomain};
use revfront::signal::Waveform;

fn conv(x: &[f64], h: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|n| (0..h.len().min(n + 1)).map(|k| h[k] * x[n - k]).sum())
        .collect()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum();
    let den: f64 = b.iter().map(|q| q * q).sum();
    (num / den).sqrt()
}

fn params(k: usize, sparsity: SparsityWeight, iterations: usize, tol: f64) -> NmfParams {
    NmfParams {
        filter_len: k,
        sparsity,
        iterations,
        tol,
        ..NmfParams::new(16000).unwrap()
    }
}

#[test]
fn identity_filter_recovers_spike_train() {
    let mut y = vec![0.0; 200];
    for (i, v) in [(20, 1.0), (60, 0.7), (100, 1.2), (140, 0.9), (180, 0.5)] {
        y[i] = v;
    }
    let r = nnconv_deconv(
        &y,
        &params(25, SparsityWeight::RelativeToMean(0.05), 100, 1e-5),
    )
    .unwrap();
    assert!(rel_err(&r.x, &y) <= 0.05, "x error {}", rel_err(&r.x, &y));
    assert!(r.h[0] >= 0.9, "h[0] = {}", r.h[0]);
}

#[test]
fn exponential_filter_instance_recovered() {
    let mut x = vec![0.0; 200];
    for (i, v) in [(30, 1.0), (90, 0.6), (150, 0.8)] {
        x[i] = v;
    }
    let h: Vec<f64> = (0..15).map(|n| (-(n as f64) / 5.0).exp()).collect();
    let total: f64 = h.iter().sum();
    let h: Vec<f64> = h.iter().map(|v| v / total).collect();
    let y = conv(&x, &h);
    let r = nnconv_deconv(&y, &params(15, SparsityWeight::Absolute(0.01), 500, 0.0)).unwrap();
    assert!(r.objective.len() <= 501);
    let err = rel_err(&r.x, &x);
    assert!(err <= 0.15, "relative error {err}");
    let violations = r.objective.windows(2).filter(|w| w[1] > w[0]).count();
    assert_eq!(violations, 0);
}

fn band_envelopes(wave: &Waveform, p: &NmfParams, domain: EnvelopeDomain) -> Vec<Vec<f64>> {
    let env = gammatone_analyze(wave, &p.bank, p.window_ms, p.hop_ms, domain).unwrap();
    env.data().outer_iter().map(|row| row.to_vec()).collect()
}

#[test]
fn anechoic_speech_keeps_band_energies() {
    let p = NmfParams::new(16000).unwrap();
    let clean = synth_utterance(3, 16000).unwrap();
    let out = nmf_dereverb(&clean, &p).unwrap();
    assert_eq!(out.len(), clean.len());
    let before = band_envelopes(&clean, &p, EnvelopeDomain::Power);
    let after = band_envelopes(&out, &p, EnvelopeDomain::Power);
    for (b, (x, y)) in before.iter().zip(&after).enumerate() {
        let ratio_db = 10.0 * (y.iter().sum::<f64>() / x.iter().sum::<f64>()).log10();
        assert!(ratio_db.abs() <= 2.0, "band {b}: {ratio_db:.2} dB");
    }
}

#[test]
fn dereverberation_sharpens_band_envelopes() {
    let p = NmfParams::new(16000).unwrap();
    let grid = GridConfig {
        rts_s: vec![1.27],
        distances_m: vec![2.56],
        ..GridConfig::default()
    };
    let rir = &grid_conditions(&grid, 16000).unwrap()[0].rir;
    let wet = reverberate(&synth_utterance(4, 16000).unwrap(), rir).unwrap();
    let out = nmf_dereverb(&wet, &p).unwrap();
    let before = band_envelopes(&wet, &p, EnvelopeDomain::Magnitude);
    let after = band_envelopes(&out, &p, EnvelopeDomain::Magnitude);
    let sharper = before
        .iter()
        .zip(&after)
        .filter(|(x, y)| kurtosis(y) > kurtosis(x))
        .count();
    assert!(
        sharper as f64 >= 0.75 * before.len() as f64,
        "{sharper} of {} bands",
        before.len()
    );
}

#[test]
fn silence_stays_silent() {
    let p = NmfParams::new(16000).unwrap();
    let out = nmf_dereverb(&Waveform::silence(16000, 16000).unwrap(), &p).unwrap();
    assert!(out.samples().iter().all(|&v| v == 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn updates_keep_iterates_non_negative_and_objective_monotone(
        y in prop::collection::vec(0.0f64..5.0, 30..90),
        k in 1usize..12,
    ) {
        let r = nnconv_deconv(&y, &params(k, SparsityWeight::RelativeToMean(0.05), 60, 0.0)).unwrap();
        prop_assert!(r.x.iter().chain(&r.h).all(|&v| v >= 0.0));
        for w in r.objective.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-10);
        }
    }

    #[test]
    fn deconvolution_is_scale_covariant(
        y in prop::collection::vec(0.01f64..3.0, 40..80),
        scale in 0.1f64..20.0,
    ) {
        // relative sparsity scales the penalty with the envelope
        let p = params(6, SparsityWeight::RelativeToMean(0.05), 40, 0.0);
        let base = nnconv_deconv(&y, &p).unwrap();
        let ys: Vec<f64> = y.iter().map(|v| v * scale).collect();
        let scaled = nnconv_deconv(&ys, &p).unwrap();
        let xs: Vec<f64> = base.x.iter().map(|v| v * scale).collect();
        prop_assert!(rel_err(&scaled.x, &xs) <= 1e-6);
        prop_assert!(rel_err(&scaled.h, &base.h) <= 1e-6);
    }
}
