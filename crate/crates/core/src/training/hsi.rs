//! Per-pixel classification of hyperspectral scenes with a hard example
//! generator.
//!
//! The detector gets one sigmoid unit per category. In the adversarial
//! stage the generator is pushed toward the highest-loss wrong category
//! of each example; in the last stage a fraction of every batch is
//! replaced by generated examples that keep their true category.

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{adversarial_update, generate_negatives, Stage, TelemetryRecord, TrainState};
use crate::data::hsi::{mirror_pad, split_per_class};
use crate::data::labels::{Coord, LabelSet};
use crate::data::patch::{apply_symmetry, dihedral_group, extract_patch, Patch, PATCH_HALF};
use crate::data::raster::{normalize, ChannelStats, Raster};
use crate::error::{Error, Result};
use crate::losses::{category_losses, heg_adversarial_label};
use crate::models::detector::{score_region, Region};
use crate::tensor::Tensor;

/// A normalized, mirror-padded scene with its train/test pixel split.
#[derive(Debug, Clone)]
pub struct HsiData {
    /// Padded by 12 pixels so every original pixel hosts a full patch.
    pub padded: Raster,
    pub height: usize,
    pub width: usize,
    pub classes: usize,
    pub train: Vec<(Coord, usize)>,
    pub test: Vec<(Coord, usize)>,
    pub warnings: Vec<String>,
    pub stats: ChannelStats,
}

impl HsiData {
    pub fn new(raster: &Raster, labels: &LabelSet, per_class: usize, split_seed: u64) -> Result<Self> {
        let classes = labels
            .classes
            .as_ref()
            .ok_or_else(|| Error::Config("label set is not in HSI mode".into()))?
            .len();
        let pixels = labels
            .pixel_labels
            .as_ref()
            .and_then(|m| m.get(&raster.id))
            .ok_or_else(|| Error::Integrity(format!("no pixel labels for {}", raster.id)))?;
        let split = split_per_class(pixels, classes, per_class, split_seed);
        let stats = ChannelStats::from_rasters([raster])?;
        let padded = mirror_pad(&normalize(raster, &stats)?, PATCH_HALF)?;
        Ok(HsiData {
            padded,
            height: raster.height,
            width: raster.width,
            classes,
            train: split.train,
            test: split.test,
            warnings: split.warnings,
            stats,
        })
    }

    fn patch(&self, (row, col): Coord, label: usize) -> Result<Patch> {
        let mut p = extract_patch(&self.padded, row + PATCH_HALF, col + PATCH_HALF)?;
        p.label = label;
        Ok(p)
    }

    fn draw(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Patch>> {
        if self.train.is_empty() {
            return Err(Error::CannotComposeBatch("no HSI training pixels".into()));
        }
        let idx: Vec<usize> = if n <= self.train.len() {
            sample(rng, self.train.len(), n).into_vec()
        } else {
            (0..n).map(|_| rng.random_range(0..self.train.len())).collect()
        };
        idx.into_iter()
            .map(|i| {
                let (coord, label) = self.train[i];
                self.patch(coord, label)
            })
            .collect()
    }
}

fn stack(patches: &[Patch]) -> Result<Tensor> {
    let c = patches[0].channels;
    Tensor::from_vec(
        &[patches.len(), c, 25, 25],
        patches.iter().flat_map(|p| p.values.iter().copied()).collect(),
    )
}

pub(super) fn detector_iteration(state: &mut TrainState, data: &HsiData) -> Result<TelemetryRecord> {
    let stage = state.stage;
    let t = state.iteration;
    let lr = state.config.detector_schedule(stage).lr(t);
    let n = state.config.sampler.batch_size;
    let mut patches = data.draw(n, &mut state.rng)?;
    let group = dihedral_group();
    if state.config.sampler.augment_positives {
        for p in patches.iter_mut() {
            let m = group[state.rng.random_range(0..group.len())];
            *p = apply_symmetry(p, m);
        }
    }
    let mut generated = 0;
    if stage == Stage::Stage3 {
        generated = (n as f64 * state.config.hsi_generated_fraction).round() as usize;
        if generated > 0 {
            let out = generate_negatives(&state.generator_spec, &state.generator, &patches[n - generated..])?;
            if out.iter().any(|p| p.values.iter().any(|v| !v.is_finite())) {
                return Err(state.diverged("generator produced non-finite patches"));
            }
            patches.splice(n - generated.., out);
        }
    }
    let inputs = stack(&patches)?;
    let targets: Vec<f64> = patches.iter().map(|p| p.label as f64).collect();
    let loss = state.detector_update(&inputs, &targets, lr)?;
    let mut rec = TelemetryRecord::new(stage, t, lr);
    rec.detector_loss = Some(loss);
    if stage == Stage::Stage3 {
        rec.generated_score = Some(generated as f64 / n as f64);
    }
    Ok(rec)
}

pub(super) fn adversarial_iteration(state: &mut TrainState, data: &HsiData) -> Result<TelemetryRecord> {
    let n = state.config.adversarial_batch;
    let patches = data.draw(n, &mut state.rng)?;
    let real = stack(&patches)?;
    let k = data.classes;
    let scores = score_all(state, &real)?;
    let targets = patches
        .iter()
        .enumerate()
        .map(|(i, p)| heg_adversarial_label(&category_losses(&scores[i * k..(i + 1) * k]), p.label))
        .collect::<Result<Vec<_>>>()?;
    adversarial_update(state, &real, Some(&targets))
}

/// All class scores, dropout-free, `n * k` row-major.
fn score_all(state: &TrainState, x: &Tensor) -> Result<Vec<f64>> {
    let trace = crate::models::detector::forward_train::<ChaCha8Rng>(&state.detector_spec, &state.detector, x, None)?;
    Ok(trace.scores.into_data())
}

/// Test-pixel predictions of a trained state.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiReport {
    pub predictions: Vec<usize>,
    pub labels: Vec<usize>,
    pub overall_accuracy: f64,
}

/// Classify every test pixel by its highest-scoring category.
pub fn evaluate_hsi(state: &TrainState, data: &HsiData) -> Result<HsiReport> {
    let spec = &state.detector_spec;
    if spec.output_units != data.classes {
        return Err(Error::Shape(format!(
            "detector has {} outputs for {} categories",
            spec.output_units, data.classes
        )));
    }
    let (ph, pw) = (data.padded.height, data.padded.width);
    let tile = data.padded.window_f64(0, 0, ph, pw);
    let map = score_region(spec, &state.detector, &tile, ph, pw, Region::valid(ph, pw));
    let (h, w) = (data.height, data.width);
    let mut predictions = Vec::with_capacity(data.test.len());
    let mut labels = Vec::with_capacity(data.test.len());
    for &((r, c), label) in &data.test {
        let best = (0..data.classes)
            .map(|o| (o, map.data()[(o * h + r) * w + c]))
            .fold((0, f64::NEG_INFINITY), |acc, (o, s)| if s > acc.1 { (o, s) } else { acc });
        predictions.push(best.0);
        labels.push(label);
    }
    let correct = predictions.iter().zip(&labels).filter(|(p, l)| p == l).count();
    let overall_accuracy = if labels.is_empty() {
        f64::NAN
    } else {
        correct as f64 / labels.len() as f64
    };
    Ok(HsiReport {
        predictions,
        labels,
        overall_accuracy,
    })
}

/// Train a classifier on `data` from scratch.
pub fn train_hsi(data: &HsiData, config: &super::TrainConfig, opts: &super::RunOptions) -> Result<(TrainState, super::RunOutcome)> {
    let mut config = config.clone();
    config.mode = super::TrainMode::Hsi;
    let mut state = TrainState::initialize(&config, data.padded.channels, data.classes, data.stats.clone())?;
    let outcome = super::run_hsi(&mut state, data, opts)?;
    Ok((state, outcome))
}
