//! Randomized shoebox rooms and their impulse responses.
//!
//! Rooms are drawn around a nominal 7.95 x 5.68 x 4.5 m chamber. A nominal
//! reverberation time fixes the mean absorption through Sabine's formula;
//! the six wall reflection coefficients then scatter around
//! `sqrt(1 - alpha)`. Source and microphone are placed at a sampled distance
//! with wall and height clearances.

mod decay;
mod image;

use std::path::Path;

use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use decay::{estimate_rt60, schroeder_curve_db, FIT_END_DB, FIT_START_DB};
pub use image::{image_method_rir, INTERP_TAPS};

use crate::error::{Error, Result};
use crate::signal::wav::{write_wav, WavEncoding};
use crate::signal::Waveform;

pub const SPEED_OF_SOUND_M_S: f64 = 343.0;
/// Sabine constant `24 ln 10 / c` rounded as it is usually quoted.
pub const SABINE_CONSTANT: f64 = 0.161;
/// Largest reflection coefficient a sampled surface may take.
pub const MAX_REFLECTION: f64 = 0.999;
/// Response length as a multiple of the nominal reverberation time.
pub const RIR_LENGTH_FACTOR: f64 = 1.25;
/// Generator recorded in every [`RirMeta`].
pub const RNG_NAME: &str = "ChaCha8Rng";

const PLACEMENT_ATTEMPTS: usize = 10_000;
const ROOM_ATTEMPTS: usize = 100;

/// Mean absorption coefficient that gives `target_rt_s` in a room of `dims_m`.
pub fn sabine_absorption(dims_m: [f64; 3], target_rt_s: f64) -> Result<f64> {
    if dims_m.iter().any(|&d| !(d > 0.0)) || !(target_rt_s > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "dimensions {dims_m:?} and RT {target_rt_s} must be positive"
        )));
    }
    let [l, w, h] = dims_m;
    let volume = l * w * h;
    let surface = 2.0 * (l * w + l * h + w * h);
    let alpha = SABINE_CONSTANT * volume / (surface * target_rt_s);
    if alpha >= 1.0 {
        return Err(Error::Infeasible(format!(
            "RT {target_rt_s} s needs mean absorption {alpha:.3} >= 1 in a {l}x{w}x{h} m room"
        )));
    }
    Ok(alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSamplerConfig {
    pub nominal_dims_m: [f64; 3],
    /// Relative half-width of the uniform dimension jitter.
    pub dim_jitter: f64,
    pub rt_range_s: (f64, f64),
    /// Relative half-width of the per-surface reflection jitter.
    pub refl_jitter: f64,
    pub distance_range_m: (f64, f64),
    pub wall_margin_m: f64,
    pub height_range_m: (f64, f64),
    pub seed: u64,
}

impl Default for RoomSamplerConfig {
    fn default() -> Self {
        Self {
            nominal_dims_m: [7.95, 5.68, 4.5],
            dim_jitter: 0.20,
            rt_range_s: (0.45, 1.87),
            refl_jitter: 0.10,
            distance_range_m: (0.144, 2.816),
            wall_margin_m: 1.0,
            height_range_m: (1.0, 2.0),
            seed: 0,
        }
    }
}

impl RoomSamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.nominal_dims_m.iter().any(|&d| !(d > 0.0)) {
            return bad(format!(
                "dimensions {:?} must be positive",
                self.nominal_dims_m
            ));
        }
        if !(0.0..1.0).contains(&self.dim_jitter) || !(0.0..1.0).contains(&self.refl_jitter) {
            return bad("jitter fractions must lie in [0, 1)".into());
        }
        for (name, (lo, hi)) in [
            ("rt_range_s", self.rt_range_s),
            ("distance_range_m", self.distance_range_m),
            ("height_range_m", self.height_range_m),
        ] {
            if !(lo > 0.0 && lo < hi) {
                return bad(format!("{name} must satisfy 0 < lo < hi, got ({lo}, {hi})"));
            }
        }
        if !(self.wall_margin_m >= 0.0) {
            return bad("wall margin must be non-negative".into());
        }
        let smallest = self.nominal_dims_m.map(|d| d * (1.0 - self.dim_jitter));
        let span_x = smallest[0] - 2.0 * self.wall_margin_m;
        let span_y = smallest[1] - 2.0 * self.wall_margin_m;
        let span_z = self.height_range_m.1 - self.height_range_m.0;
        if span_x <= 0.0 || span_y <= 0.0 || self.height_range_m.1 >= smallest[2] {
            return Err(Error::Infeasible(
                "wall margin or height range does not fit the smallest room".into(),
            ));
        }
        let diag = (span_x * span_x + span_y * span_y + span_z * span_z).sqrt();
        if self.distance_range_m.1 >= diag {
            return Err(Error::Infeasible(format!(
                "distance {} m cannot fit the {diag:.2} m placement region of the smallest room",
                self.distance_range_m.1
            )));
        }
        Ok(())
    }
}

/// Sampled room geometry, surface reflections and source/microphone placement.
///
/// Reflection coefficients are ordered `x=0, x=L, y=0, y=W, z=0, z=H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub dims_m: [f64; 3],
    pub reflection_coeffs: [f64; 6],
    pub nominal_rt_s: f64,
    pub source_pos_m: [f64; 3],
    pub mic_pos_m: [f64; 3],
    pub distance_m: f64,
}

impl RoomSpec {
    pub(crate) fn validate_geometry(&self) -> Result<()> {
        if self.dims_m.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "bad room {:?}",
                self.dims_m
            )));
        }
        if self
            .reflection_coeffs
            .iter()
            .any(|b| !(0.0..1.0).contains(b))
        {
            return Err(Error::InvalidParameter(format!(
                "reflection coefficients {:?} must lie in [0, 1)",
                self.reflection_coeffs
            )));
        }
        for p in [self.source_pos_m, self.mic_pos_m] {
            if p.iter()
                .zip(&self.dims_m)
                .any(|(x, d)| !(*x > 0.0 && x < d))
            {
                return Err(Error::InvalidParameter(format!(
                    "position {p:?} outside room {:?}",
                    self.dims_m
                )));
            }
        }
        Ok(())
    }

    /// Same room with source and microphone exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            source_pos_m: self.mic_pos_m,
            mic_pos_m: self.source_pos_m,
            ..self.clone()
        }
    }
}

#[cfg(test)]
fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    a.iter()
        .zip(&b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn uniform_around<R: Rng + ?Sized>(rng: &mut R, centre: f64, jitter: f64) -> f64 {
    if jitter == 0.0 {
        centre
    } else {
        rng.random_range(centre * (1.0 - jitter)..centre * (1.0 + jitter))
    }
}

/// Draws one room. Placement uses rejection sampling: a source position is
/// drawn in the allowed region, the microphone is put at the sampled distance
/// in a uniformly random direction, and the pair is kept if it also lies in
/// the allowed region.
pub fn sample_room<R: Rng + ?Sized>(cfg: &RoomSamplerConfig, rng: &mut R) -> Result<RoomSpec> {
    cfg.validate()?;
    let dims_m = cfg
        .nominal_dims_m
        .map(|d| uniform_around(rng, d, cfg.dim_jitter));
    let nominal_rt_s = rng.random_range(cfg.rt_range_s.0..cfg.rt_range_s.1);
    let alpha = sabine_absorption(dims_m, nominal_rt_s)?;
    let beta = (1.0 - alpha).sqrt();
    let mut reflection_coeffs = [0.0; 6];
    for r in reflection_coeffs.iter_mut() {
        *r = uniform_around(rng, beta, cfg.refl_jitter).clamp(0.0, MAX_REFLECTION);
    }
    let distance_m = rng.random_range(cfg.distance_range_m.0..cfg.distance_range_m.1);

    let m = cfg.wall_margin_m;
    let lo = [m, m, cfg.height_range_m.0];
    let hi = [dims_m[0] - m, dims_m[1] - m, cfg.height_range_m.1];
    let inside = |p: &[f64; 3]| (0..3).all(|i| p[i] >= lo[i] && p[i] <= hi[i]);
    for _ in 0..PLACEMENT_ATTEMPTS {
        let source: [f64; 3] = std::array::from_fn(|i| rng.random_range(lo[i]..=hi[i]));
        let cos_theta: f64 = rng.random_range(-1.0..=1.0);
        let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let sin_theta = (1.0 - cos_theta * cos_theta).sqrt();
        let dir = [sin_theta * phi.cos(), sin_theta * phi.sin(), cos_theta];
        let mic: [f64; 3] = std::array::from_fn(|i| source[i] + distance_m * dir[i]);
        if inside(&mic) {
            return Ok(RoomSpec {
                dims_m,
                reflection_coeffs,
                nominal_rt_s,
                source_pos_m: source,
                mic_pos_m: mic,
                distance_m,
            });
        }
    }
    Err(Error::Infeasible(format!(
        "no placement at {distance_m:.3} m in a {dims_m:?} room after {PLACEMENT_ATTEMPTS} tries"
    )))
}

/// Deterministic rooms for every `(rt, distance)` pair, RT-major.
///
/// Every room has the nominal dimensions and the exact Sabine reflection
/// coefficient on all six surfaces. Source and microphone sit on the room's
/// long centre line at mid-height of the allowed range, symmetric about the
/// room centre.
pub fn fixed_grid(
    rts_s: &[f64],
    distances_m: &[f64],
    cfg: &RoomSamplerConfig,
) -> Result<Vec<RoomSpec>> {
    if rts_s.is_empty() || distances_m.is_empty() {
        return Err(Error::InvalidParameter(
            "grid lists must be non-empty".into(),
        ));
    }
    let dims_m = cfg.nominal_dims_m;
    let [l, w, _] = dims_m;
    let z = 0.5 * (cfg.height_range_m.0 + cfg.height_range_m.1);
    let mut specs = Vec::with_capacity(rts_s.len() * distances_m.len());
    for &rt in rts_s {
        let beta = (1.0 - sabine_absorption(dims_m, rt)?).sqrt();
        for &d in distances_m {
            if !(d > 0.0) || l / 2.0 - d / 2.0 < cfg.wall_margin_m {
                return Err(Error::Infeasible(format!(
                    "distance {d} m does not fit a {l} m room with {} m margins",
                    cfg.wall_margin_m
                )));
            }
            let source_pos_m = [l / 2.0 - d / 2.0, w / 2.0, z];
            let mic_pos_m = [l / 2.0 + d / 2.0, w / 2.0, z];
            specs.push(RoomSpec {
                dims_m,
                reflection_coeffs: [beta; 6],
                nominal_rt_s: rt,
                source_pos_m,
                mic_pos_m,
                distance_m: d,
            });
        }
    }
    Ok(specs)
}

/// Metadata written next to every generated impulse response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RirMeta {
    #[serde(flatten)]
    pub room: RoomSpec,
    pub sample_rate_hz: u32,
    pub rir_len_samples: usize,
    pub estimated_rt60_s: f64,
    pub seed: u64,
    pub rng: String,
}

impl RirMeta {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Default response length for a room: 1.25 x its nominal RT.
pub fn default_rir_len_s(spec: &RoomSpec) -> f64 {
    RIR_LENGTH_FACTOR * spec.nominal_rt_s
}

/// Simulates `spec` and measures the result.
pub fn render_rir(spec: &RoomSpec, sample_rate_hz: u32, seed: u64) -> Result<(Waveform, RirMeta)> {
    let rir = image_method_rir(spec, sample_rate_hz, default_rir_len_s(spec))?;
    let estimated_rt60_s = estimate_rt60(&rir)?;
    let meta = RirMeta {
        room: spec.clone(),
        sample_rate_hz,
        rir_len_samples: rir.len(),
        estimated_rt60_s,
        seed,
        rng: RNG_NAME.to_string(),
    };
    Ok((rir, meta))
}

/// Seed of the `index`-th room of a set (splitmix64 of the set seed and index).
pub fn room_seed(set_seed: u64, index: usize) -> u64 {
    let mut z = set_seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `n` random rooms and their impulse responses.
///
/// Rooms are drawn sequentially, each from its own generator seeded with
/// [`room_seed`], before any simulation starts, so the parallel rendering
/// stage cannot influence what is sampled.
pub fn generate_rir_set(
    cfg: &RoomSamplerConfig,
    n: usize,
    sample_rate_hz: u32,
) -> Result<Vec<(Waveform, RirMeta)>> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one RIR".into()));
    }
    cfg.validate()?;
    let mut rooms = Vec::with_capacity(n);
    let mut failures = 0usize;
    for i in 0..n {
        let seed = room_seed(cfg.seed, i);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut attempts = 0;
        let spec = loop {
            match sample_room(cfg, &mut rng) {
                Ok(spec) => break spec,
                Err(Error::Infeasible(msg)) if attempts + 1 < ROOM_ATTEMPTS => {
                    attempts += 1;
                    failures += 1;
                    debug!("room {i}: resampling after placement failure: {msg}");
                }
                Err(e) => return Err(e),
            }
        };
        rooms.push((spec, seed));
    }
    if failures > 0 {
        warn!("{failures} room draws were resampled after placement failures");
    }
    rooms
        .par_iter()
        .map(|(spec, seed)| render_rir(spec, sample_rate_hz, *seed))
        .collect()
}

/// Writes `stem.wav` (float32) and `stem.json` into `dir`.
pub fn write_rir(dir: impl AsRef<Path>, stem: &str, rir: &Waveform, meta: &RirMeta) -> Result<()> {
    let dir = dir.as_ref();
    write_wav(dir.join(format!("{stem}.wav")), rir, WavEncoding::Float32)?;
    meta.write_json(dir.join(format!("{stem}.json")))
}
