//! Synthetic multispectral scenes.
//!
//! Positive scenes carry a few thin, curving bands with a distinct spectral
//! signature over a "summer" background; only a sparse subset of band pixels
//! is labeled. Negative scenes have no bands and, by default, a seasonally
//! shifted "winter" background. Both kinds carry rare confuser blobs whose
//! spectrum resembles the band signature in the visible channels.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::labels::{Coord, LabelSet};
use super::patch::PATCH_HALF;
use super::raster::Raster;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Season {
    Summer,
    Winter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    /// Number of elongated positive bands per positive scene.
    pub positive_bands: usize,
    pub band_width_min: usize,
    pub band_width_max: usize,
    /// Curve length in pixels.
    pub band_length: usize,
    pub labels_per_raster: usize,
    /// Peak amplitude of the band signature.
    pub signal: f64,
    pub noise: f64,
    /// Amplitude of the smooth background field.
    pub texture: f64,
    /// Distance between summer and winter background means.
    pub season_shift: f64,
    pub confusers: usize,
    pub confuser_strength: f64,
    /// Fraction of columns covered by (masked-out) land on the left.
    pub land_fraction: f64,
    pub negative_season: Season,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            height: 128,
            width: 128,
            bands: 8,
            positive_bands: 3,
            band_width_min: 2,
            band_width_max: 6,
            band_length: 90,
            labels_per_raster: 100,
            signal: 1.0,
            noise: 0.35,
            texture: 0.25,
            season_shift: 0.8,
            confusers: 6,
            confuser_strength: 1.0,
            land_fraction: 0.0,
            negative_season: Season::Winter,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bands < 3 {
            return Err(Error::Config(format!("synthetic scenes need at least 3 bands, got {}", self.bands)));
        }
        if self.height < 2 * PATCH_HALF + 1 || self.width < 2 * PATCH_HALF + 1 {
            return Err(Error::Config(format!(
                "synthetic scenes must be at least 25x25, got {}x{}",
                self.height, self.width
            )));
        }
        if self.band_width_min == 0 || self.band_width_min > self.band_width_max {
            return Err(Error::Config("band width range must satisfy 0 < min <= max".into()));
        }
        if !(0.0..0.9).contains(&self.land_fraction) {
            return Err(Error::Config("land_fraction must lie in [0, 0.9)".into()));
        }
        for (name, v) in [
            ("signal", self.signal),
            ("noise", self.noise),
            ("texture", self.texture),
            ("season_shift", self.season_shift),
            ("confuser_strength", self.confuser_strength),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and non-negative")));
            }
        }
        Ok(())
    }
}

const BAND_SIGNATURE: [f64; 8] = [0.3, 0.6, 1.0, 0.9, 0.4, -0.1, -0.5, -0.4];
const CONFUSER_SIGNATURE: [f64; 8] = [0.3, 0.6, 1.0, 0.9, 0.4, 0.6, 0.8, 0.7];
const WINTER_OFFSET: [f64; 8] = [-0.4, -0.5, -0.6, -0.5, -0.3, -0.1, 0.2, 0.1];
const SUMMER_MEAN: [f64; 8] = [2.0, 2.4, 2.2, 1.8, 1.5, 1.1, 0.8, 0.7];
const LAND_MEAN: [f64; 8] = [3.5, 3.8, 4.0, 4.1, 4.5, 5.0, 6.0, 6.2];

fn cyc(table: &[f64; 8], c: usize) -> f64 {
    table[c % 8]
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}

fn land_mask(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Option<Vec<bool>> {
    if cfg.land_fraction <= 0.0 {
        return None;
    }
    let phase = rng.random::<f64>() * std::f64::consts::TAU;
    let coast = cfg.land_fraction * cfg.width as f64;
    let mut mask = vec![true; cfg.height * cfg.width];
    for r in 0..cfg.height {
        let edge = coast + 4.0 * (r as f64 / 11.0 + phase).sin();
        for c in 0..cfg.width {
            mask[r * cfg.width + c] = (c as f64) >= edge;
        }
    }
    Some(mask)
}

/// Background values, `bands x H x W`, in f64.
fn background(cfg: &SynthConfig, season: Season, mask: Option<&[bool]>, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (h, w) = (cfg.height, cfg.width);
    let mut out = vec![0.0; cfg.bands * h * w];
    for c in 0..cfg.bands {
        let mut mean = cyc(&SUMMER_MEAN, c);
        if season == Season::Winter {
            mean += cfg.season_shift * cyc(&WINTER_OFFSET, c);
        }
        let waves: Vec<(f64, f64, f64, f64)> = (0..3)
            .map(|_| {
                let freq = 0.02 + 0.06 * rng.random::<f64>();
                let angle = rng.random::<f64>() * std::f64::consts::PI;
                let phase = rng.random::<f64>() * std::f64::consts::TAU;
                let amp = cfg.texture / 3f64.sqrt() * (0.5 + rng.random::<f64>());
                (freq * angle.cos(), freq * angle.sin(), phase, amp)
            })
            .collect();
        let plane = &mut out[c * h * w..(c + 1) * h * w];
        for r in 0..h {
            for col in 0..w {
                let field: f64 = waves
                    .iter()
                    .map(|&(fy, fx, ph, a)| a * (std::f64::consts::TAU * (fy * r as f64 + fx * col as f64) + ph).sin())
                    .sum();
                plane[r * w + col] = mean + field + cfg.noise * normal(rng);
            }
        }
        if let Some(mask) = mask {
            for (i, &sea) in mask.iter().enumerate() {
                if !sea {
                    plane[i] = cyc(&LAND_MEAN, c) + cfg.noise * normal(rng);
                }
            }
        }
    }
    out
}

/// Intensity in `[0, 1]` of each pixel covered by the random curves.
fn band_intensity(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (h, w) = (cfg.height as f64, cfg.width as f64);
    let mut out = vec![0.0f64; cfg.height * cfg.width];
    for _ in 0..cfg.positive_bands {
        let amp = 0.6 + 0.4 * rng.random::<f64>();
        let width = rng.random_range(cfg.band_width_min..=cfg.band_width_max) as f64;
        let radius = (width - 1.0) / 2.0 + 0.5;
        let (mut y, mut x) = (
            PATCH_HALF as f64 + rng.random::<f64>() * (h - 2.0 * PATCH_HALF as f64),
            PATCH_HALF as f64 + rng.random::<f64>() * (w - 2.0 * PATCH_HALF as f64),
        );
        let mut heading = rng.random::<f64>() * std::f64::consts::TAU;
        let mut turn = 0.0;
        for _ in 0..2 * cfg.band_length {
            turn = 0.9 * turn + 0.03 * normal(rng);
            heading += turn;
            y += 0.5 * heading.sin();
            x += 0.5 * heading.cos();
            if y < 0.0 || x < 0.0 || y >= h || x >= w {
                break;
            }
            let reach = radius.ceil() as i64;
            let (cy, cx) = (y.round() as i64, x.round() as i64);
            for r in (cy - reach).max(0)..=(cy + reach).min(cfg.height as i64 - 1) {
                for c in (cx - reach).max(0)..=(cx + reach).min(cfg.width as i64 - 1) {
                    let d = ((r as f64 - y).powi(2) + (c as f64 - x).powi(2)).sqrt();
                    if d <= radius {
                        let v: f64 = amp * (1.0 - 0.3 * d / radius.max(1e-9));
                        let slot: &mut f64 = &mut out[r as usize * cfg.width + c as usize];
                        *slot = slot.max(v);
                    }
                }
            }
        }
    }
    out
}

fn add_confusers(cfg: &SynthConfig, values: &mut [f64], rng: &mut ChaCha8Rng) {
    let (h, w) = (cfg.height, cfg.width);
    for _ in 0..cfg.confusers {
        let radius = 2.0 + 2.5 * rng.random::<f64>();
        let cy = rng.random::<f64>() * h as f64;
        let cx = rng.random::<f64>() * w as f64;
        let amp = cfg.confuser_strength * (0.7 + 0.3 * rng.random::<f64>());
        let reach = radius.ceil() as i64;
        for r in (cy as i64 - reach).max(0)..=(cy as i64 + reach).min(h as i64 - 1) {
            for c in (cx as i64 - reach).max(0)..=(cx as i64 + reach).min(w as i64 - 1) {
                let d = ((r as f64 - cy).powi(2) + (c as f64 - cx).powi(2)).sqrt();
                if d <= radius {
                    let k = amp * (1.0 - (d / radius).powi(2));
                    for ch in 0..cfg.bands {
                        values[(ch * h + r as usize) * w + c as usize] += k * cyc(&CONFUSER_SIGNATURE, ch);
                    }
                }
            }
        }
    }
}

fn to_raster(id: &str, cfg: &SynthConfig, values: Vec<f64>, mask: Option<Vec<bool>>) -> Result<Raster> {
    let r = Raster::new(id, cfg.bands, cfg.height, cfg.width, values.into_iter().map(|v| v as f32).collect())?;
    match mask {
        Some(m) => r.with_mask(m),
        None => Ok(r),
    }
}

fn positive_scene(cfg: &SynthConfig, id: &str, rng: &mut ChaCha8Rng) -> Result<(Raster, Vec<Coord>)> {
    let mask = land_mask(cfg, rng);
    let mut values = background(cfg, Season::Summer, mask.as_deref(), rng);
    let intensity = band_intensity(cfg, rng);
    let plane = cfg.height * cfg.width;
    let sea = |i: usize| mask.as_ref().is_none_or(|m| m[i]);
    for (i, &k) in intensity.iter().enumerate() {
        if k > 0.0 && sea(i) {
            for c in 0..cfg.bands {
                values[c * plane + i] += cfg.signal * k * cyc(&BAND_SIGNATURE, c);
            }
        }
    }
    add_confusers(cfg, &mut values, rng);
    let candidates: Vec<Coord> = (0..plane)
        .filter(|&i| intensity[i] > 0.0 && sea(i))
        .map(|i| (i / cfg.width, i % cfg.width))
        .filter(|&(r, c)| {
            r >= PATCH_HALF && c >= PATCH_HALF && r + PATCH_HALF < cfg.height && c + PATCH_HALF < cfg.width
        })
        .collect();
    let take = cfg.labels_per_raster.min(candidates.len());
    let mut labels: Vec<Coord> = sample(rng, candidates.len(), take).into_iter().map(|i| candidates[i]).collect();
    labels.sort_unstable();
    Ok((to_raster(id, cfg, values, mask)?, labels))
}

fn negative_scene(cfg: &SynthConfig, id: &str, season: Season, rng: &mut ChaCha8Rng) -> Result<Raster> {
    let mask = land_mask(cfg, rng);
    let mut values = background(cfg, season, mask.as_deref(), rng);
    add_confusers(cfg, &mut values, rng);
    to_raster(id, cfg, values, mask)
}

/// A positive scene, a negative scene and their labels; a pure function of
/// `(config, seed)`.
pub fn generate_synthetic_scene(config: &SynthConfig, seed: u64) -> Result<(Raster, Raster, LabelSet)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos_id = format!("synth{seed}-pos");
    let neg_id = format!("synth{seed}-neg");
    let (pos, coords) = positive_scene(config, &pos_id, &mut rng)?;
    let neg = negative_scene(config, &neg_id, config.negative_season, &mut rng)?;
    let mut labels = LabelSet {
        negative_raster_ids: vec![neg_id],
        ..LabelSet::default()
    };
    if !coords.is_empty() {
        labels.positives.insert(pos_id, coords);
    }
    Ok((pos, neg, labels))
}

/// Layout of a generated train/test benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub scene: SynthConfig,
    pub train_positive: usize,
    pub train_negative: usize,
    pub test_positive: usize,
    pub test_negative: usize,
    /// Background of the held-out negative scenes.
    pub test_negative_season: Season,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            scene: SynthConfig::default(),
            train_positive: 2,
            train_negative: 2,
            test_positive: 2,
            test_negative: 2,
            test_negative_season: Season::Summer,
        }
    }
}

/// Generate every raster of a benchmark. Scene `k` of each role draws from
/// its own stream of the master seed.
pub fn generate_benchmark(config: &BenchmarkConfig, seed: u64) -> Result<Dataset> {
    config.scene.validate()?;
    if config.train_positive == 0 || config.train_negative == 0 {
        return Err(Error::Config("a benchmark needs at least one positive and one negative training scene".into()));
    }
    let mut rasters = BTreeMap::new();
    let mut train = LabelSet::default();
    let mut test = LabelSet::default();
    let roles: [(&str, usize, u64); 4] = [
        ("train-pos", config.train_positive, 0),
        ("train-neg", config.train_negative, 1),
        ("test-pos", config.test_positive, 2),
        ("test-neg", config.test_negative, 3),
    ];
    for (role, count, stream) in roles {
        for k in 0..count {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream * 1_000_003 + k as u64);
            let id = format!("{role}-{k}");
            let set = if role.starts_with("train") { &mut train } else { &mut test };
            if role.ends_with("pos") {
                let (r, coords) = positive_scene(&config.scene, &id, &mut rng)?;
                if !coords.is_empty() {
                    set.positives.insert(id.clone(), coords);
                }
                rasters.insert(id, r);
            } else {
                let season = if role == "test-neg" {
                    config.test_negative_season
                } else {
                    config.scene.negative_season
                };
                rasters.insert(id.clone(), negative_scene(&config.scene, &id, season, &mut rng)?);
                set.negative_raster_ids.push(id);
            }
        }
    }
    Ok(Dataset { rasters, train, test })
}
