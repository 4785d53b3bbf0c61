//! Evaluation over a reverberation-time x distance grid.
//!
//! Every clean utterance is reverberated with each cell's impulse response,
//! passed through each enhancer and each feature extractor, and compared
//! with the same type of features of the clean utterance. Per-cell scores
//! are means over utterances.

mod corpus;
mod metrics;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use corpus::{synth_corpus, synth_utterance, CORPUS_RMS, NOISE_FLOOR_DB};
pub use metrics::{
    drr_proxy_db, feature_rmse, kurtosis, log_spectral_distortion, MAX_ALIGN_LAG_S, MAX_DRR_DB,
    NEPER_POWER_TO_DB,
};

use crate::error::{Error, Result};
use crate::features::{extract, FeatureKind, FeatureMatrix, FeatureParams};
use crate::nmf::{nmf_dereverb, NmfParams};
use crate::rir::{default_rir_len_s, fixed_grid, image_method_rir, RoomSamplerConfig};
use crate::signal::wav::read_wav;
use crate::signal::{convolve, Waveform};
use crate::ssf::{ssf_enhance, SsfParams};
use crate::wpe::{wpe_dereverb, WpeParams};

pub const DEFAULT_GRID_RTS_S: [f64; 4] = [0.47, 0.84, 1.27, 1.77];
pub const DEFAULT_GRID_DISTANCES_M: [f64; 5] = [0.16, 0.32, 0.64, 1.28, 2.56];
/// Metric names in report order.
pub const METRICS: [&str; 3] = ["lsd_db", "feat_rmse", "drr_gain_db"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnhancerKind {
    None,
    Ssf,
    Nmf,
    Wpe,
}

impl EnhancerKind {
    pub const ALL: [EnhancerKind; 4] = [Self::None, Self::Ssf, Self::Nmf, Self::Wpe];

    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Ssf => "ssf",
            Self::Nmf => "nmf",
            Self::Wpe => "wpe",
        }
    }
}

impl std::str::FromStr for EnhancerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown enhancer '{s}'")))
    }
}

impl std::fmt::Display for EnhancerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Parameters of all enhancers.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhancerSettings {
    pub ssf: SsfParams,
    pub nmf: NmfParams,
    pub wpe: WpeParams,
}

impl EnhancerSettings {
    pub fn new(sample_rate_hz: u32) -> Result<Self> {
        Ok(Self {
            ssf: SsfParams::new(sample_rate_hz)?,
            nmf: NmfParams::new(sample_rate_hz)?,
            wpe: WpeParams::default(),
        })
    }

    pub fn apply(&self, kind: EnhancerKind, wave: &Waveform) -> Result<Waveform> {
        match kind {
            EnhancerKind::None => Ok(wave.clone()),
            EnhancerKind::Ssf => ssf_enhance(wave, &self.ssf),
            EnhancerKind::Nmf => nmf_dereverb(wave, &self.nmf),
            EnhancerKind::Wpe => wpe_dereverb(wave, &self.wpe),
        }
    }
}

/// Convolves `clean` with the unit-energy version of `rir`, trimmed to the clean length.
pub fn reverberate(clean: &Waveform, rir: &Waveform) -> Result<Waveform> {
    clean.check_rate(rir.sample_rate_hz())?;
    let energy = rir.energy();
    if energy == 0.0 {
        return Err(Error::InvalidParameter("impulse response is silent".into()));
    }
    let wet = convolve(clean, &rir.scaled(1.0 / energy.sqrt()))?;
    Ok(wet.resized(clean.len()))
}

/// Reads a newline-delimited list of WAV paths; blank lines and lines
/// starting with `#` are skipped, and relative paths are taken relative to
/// the manifest's directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    let text = std::fs::read_to_string(path)?;
    let entries: Vec<PathBuf> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| base.join(l))
        .collect();
    if entries.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "manifest {} lists no files",
            path.display()
        )));
    }
    Ok(entries)
}

/// Loads every manifest entry; all files must share one sample rate.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<Waveform>> {
    let waves = read_manifest(path)?
        .iter()
        .map(read_wav)
        .collect::<Result<Vec<_>>>()?;
    let rate = waves[0].sample_rate_hz();
    for w in &waves {
        w.check_rate(rate)?;
    }
    Ok(waves)
}

/// Where the clean utterances of a grid run come from.
#[derive(Debug, Clone, PartialEq)]
pub enum CorpusSource {
    /// WAV files listed in a manifest.
    Manifest(PathBuf),
    /// Generated with [`synth_corpus`] from the grid seed.
    Synthetic { count: usize, sample_rate_hz: u32 },
}

impl CorpusSource {
    pub fn load(&self, seed: u64) -> Result<Vec<Waveform>> {
        match self {
            Self::Manifest(path) => load_manifest(path),
            Self::Synthetic {
                count,
                sample_rate_hz,
            } => synth_corpus(*count, seed, *sample_rate_hz),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub rts_s: Vec<f64>,
    pub distances_m: Vec<f64>,
    pub enhancers: Vec<EnhancerKind>,
    pub features: Vec<FeatureKind>,
    pub corpus: CorpusSource,
    /// Room geometry and placement margins of the grid rooms.
    pub room: RoomSamplerConfig,
    pub seed: u64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            rts_s: DEFAULT_GRID_RTS_S.to_vec(),
            distances_m: DEFAULT_GRID_DISTANCES_M.to_vec(),
            enhancers: EnhancerKind::ALL.to_vec(),
            features: vec![FeatureKind::Melfb, FeatureKind::Lnfb],
            corpus: CorpusSource::Synthetic {
                count: 20,
                sample_rate_hz: crate::DEFAULT_SAMPLE_RATE_HZ,
            },
            room: RoomSamplerConfig::default(),
            seed: 0,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rts_s.is_empty()
            || self.distances_m.is_empty()
            || self.enhancers.is_empty()
            || self.features.is_empty()
        {
            return Err(Error::InvalidParameter(
                "grid lists must be non-empty".into(),
            ));
        }
        Ok(())
    }
}

/// One reverberation condition: a labelled impulse response.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub rt_s: f64,
    pub distance_m: f64,
    pub rir: Waveform,
}

/// Simulated impulse responses for every grid cell, RT-major.
pub fn grid_conditions(cfg: &GridConfig, sample_rate_hz: u32) -> Result<Vec<Condition>> {
    cfg.validate()?;
    let specs = fixed_grid(&cfg.rts_s, &cfg.distances_m, &cfg.room)?;
    specs
        .par_iter()
        .map(|spec| {
            Ok(Condition {
                rt_s: spec.nominal_rt_s,
                distance_m: spec.distance_m,
                rir: image_method_rir(spec, sample_rate_hz, default_rir_len_s(spec))?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub rt_s: f64,
    pub distance_m: f64,
    pub enhancer: EnhancerKind,
    pub feature: FeatureKind,
    pub metrics: BTreeMap<String, f64>,
    pub n_utts: usize,
}

/// Scores of one utterance in one condition: per (enhancer, feature) the
/// distortion pair, and per enhancer the DRR gain.
struct UtteranceScores {
    distortion: Vec<Vec<(f64, f64)>>,
    drr_gain: Vec<f64>,
}

fn score_utterance(
    clean: &Waveform,
    reference: &[FeatureMatrix],
    cond: &Condition,
    enhancers: &[EnhancerKind],
    features: &[FeatureKind],
    settings: &EnhancerSettings,
    feature_params: &FeatureParams,
) -> Result<UtteranceScores> {
    let reverberant = reverberate(clean, &cond.rir)?;
    let baseline_drr = drr_proxy_db(&reverberant, clean)?;
    let mut distortion = Vec::with_capacity(enhancers.len());
    let mut drr_gain = Vec::with_capacity(enhancers.len());
    for &kind in enhancers {
        let enhanced = settings.apply(kind, &reverberant)?;
        drr_gain.push(if kind == EnhancerKind::None {
            0.0
        } else {
            drr_proxy_db(&enhanced, clean)? - baseline_drr
        });
        let mut row = Vec::with_capacity(features.len());
        for (f, &feature) in features.iter().enumerate() {
            let test = extract(feature, &enhanced, feature_params)?;
            let refm = &reference[f];
            row.push((
                log_spectral_distortion(refm, &test)?,
                feature_rmse(refm, &test)?,
            ));
        }
        distortion.push(row);
    }
    Ok(UtteranceScores {
        distortion,
        drr_gain,
    })
}

/// Scores every (condition, enhancer, feature) combination over `utterances`.
///
/// Work is spread over (condition, utterance) pairs; per-cell means are
/// accumulated afterwards in a fixed order, so results do not depend on
/// scheduling.
pub fn evaluate_conditions(
    conditions: &[Condition],
    utterances: &[Waveform],
    enhancers: &[EnhancerKind],
    features: &[FeatureKind],
    settings: &EnhancerSettings,
    feature_params: &FeatureParams,
) -> Result<Vec<CellResult>> {
    if conditions.is_empty() || utterances.is_empty() || enhancers.is_empty() || features.is_empty()
    {
        return Err(Error::InvalidParameter(
            "need at least one condition, utterance, enhancer and feature".into(),
        ));
    }
    let references: Vec<Vec<FeatureMatrix>> = utterances
        .par_iter()
        .map(|clean| {
            features
                .iter()
                .map(|&f| extract(f, clean, feature_params))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = (0..conditions.len())
        .flat_map(|c| (0..utterances.len()).map(move |u| (c, u)))
        .collect();
    let scores: Vec<UtteranceScores> = jobs
        .par_iter()
        .map(|&(c, u)| {
            score_utterance(
                &utterances[u],
                &references[u],
                &conditions[c],
                enhancers,
                features,
                settings,
                feature_params,
            )
        })
        .collect::<Result<_>>()?;

    let n = utterances.len();
    let mut results = Vec::new();
    for (c, cond) in conditions.iter().enumerate() {
        let cell = &scores[c * n..(c + 1) * n];
        for (e, &enhancer) in enhancers.iter().enumerate() {
            for (f, &feature) in features.iter().enumerate() {
                let mut lsd = 0.0;
                let mut rmse = 0.0;
                let mut drr = 0.0;
                for s in cell {
                    lsd += s.distortion[e][f].0;
                    rmse += s.distortion[e][f].1;
                    drr += s.drr_gain[e];
                }
                let metrics = BTreeMap::from([
                    ("lsd_db".to_string(), lsd / n as f64),
                    ("feat_rmse".to_string(), rmse / n as f64),
                    ("drr_gain_db".to_string(), drr / n as f64),
                ]);
                if metrics.values().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "non-finite score in cell ({}, {}) {enhancer}/{feature}",
                        cond.rt_s, cond.distance_m
                    )));
                }
                results.push(CellResult {
                    rt_s: cond.rt_s,
                    distance_m: cond.distance_m,
                    enhancer,
                    feature,
                    metrics,
                    n_utts: n,
                });
            }
        }
    }
    sort_results(&mut results);
    Ok(results)
}

/// Runs the configured grid over in-memory utterances, ignoring `cfg.corpus`.
pub fn evaluate_grid_on(
    cfg: &GridConfig,
    utterances: &[Waveform],
    settings: &EnhancerSettings,
    feature_params: &FeatureParams,
) -> Result<Vec<CellResult>> {
    cfg.validate()?;
    let rate = utterances
        .first()
        .ok_or_else(|| Error::InvalidParameter("no utterances".into()))?
        .sample_rate_hz();
    let conditions = grid_conditions(cfg, rate)?;
    evaluate_conditions(
        &conditions,
        utterances,
        &cfg.enhancers,
        &cfg.features,
        settings,
        feature_params,
    )
}

/// Runs the configured grid over the configured corpus.
pub fn evaluate_grid(
    cfg: &GridConfig,
    settings: &EnhancerSettings,
    feature_params: &FeatureParams,
) -> Result<Vec<CellResult>> {
    cfg.validate()?;
    let utterances = cfg.corpus.load(cfg.seed)?;
    evaluate_grid_on(cfg, &utterances, settings, feature_params)
}

pub fn sort_results(results: &mut [CellResult]) {
    results.sort_by(|a, b| {
        a.rt_s
            .total_cmp(&b.rt_s)
            .then(a.distance_m.total_cmp(&b.distance_m))
            .then(a.enhancer.cmp(&b.enhancer))
            .then(a.feature.cmp(&b.feature))
    });
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::InvalidParameter(format!(
                "unknown report format '{other}'"
            ))),
        }
    }
}

/// Report text in the given format, rows in (rt, distance, enhancer, feature) order.
pub fn render_report(results: &[CellResult], format: ReportFormat) -> Result<String> {
    if results.is_empty() {
        return Err(Error::InvalidParameter("no results to report".into()));
    }
    let mut sorted = results.to_vec();
    sort_results(&mut sorted);
    match format {
        ReportFormat::Csv => {
            let mut out = String::from("rt_s,distance_m,enhancer,feature,metric,value,n_utts\n");
            for r in &sorted {
                for m in METRICS {
                    let value = r.metrics.get(m).ok_or_else(|| {
                        Error::InvalidParameter(format!("result lacks metric {m}"))
                    })?;
                    out.push_str(&format!(
                        "{},{},{},{},{},{},{}\n",
                        r.rt_s, r.distance_m, r.enhancer, r.feature, m, value, r.n_utts
                    ));
                }
            }
            Ok(out)
        }
        ReportFormat::Json => {
            let mut text = serde_json::to_string_pretty(&sorted)?;
            text.push('\n');
            Ok(text)
        }
    }
}

pub fn emit_report(
    results: &[CellResult],
    format: ReportFormat,
    path: impl AsRef<Path>,
) -> Result<()> {
    let text = render_report(results, format)?;
    let mut file = std::fs::File::create(path)?;
    file.write_all(text.as_bytes())?;
    Ok(())
}
