//! Stage orchestration.
//!
//! The 3-stage schedule trains the detector with hard example mining, then
//! alternates discriminator and generator updates against the frozen
//! detector, then retrains the detector on real and generated negatives
//! with the generator frozen. The single-stage schedule is the first stage
//! alone with a longer budget.

mod hsi;
mod optim;
mod state;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use hsi::{evaluate_hsi, train_hsi, HsiData, HsiReport};
pub use optim::{clip_grad_norm, sgd_step, StageSchedule};
pub use state::{load_checkpoint, RngState, TrainState};

use crate::data::dataset::Dataset;
use crate::data::patch::{extract_patch, Patch, PatchCenter, Provenance};
use crate::data::raster::{normalize, ChannelStats, Raster};
use crate::error::{Error, Result};
use crate::losses::{detector_loss, discriminator_loss, hng_loss, logit_grad};
use crate::models::detector::{backward_train, forward_train, DetectorSpec};
use crate::models::discriminator::{self, DiscriminatorSpec};
use crate::models::generator::{self, GeneratorSpec};
use crate::models::{init_params, Grads, InitScheme};
use crate::sampling::{
    compose_batch, merge_generated_negatives, sample_negative_windows, score_candidates, select_hard_batch, telemetry,
    CandidatePool, PatchBatch, SamplerConfig, SamplerTelemetry,
};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrainMode {
    #[serde(rename = "rtd-single")]
    RtdSingle,
    #[serde(rename = "rtd-3stage")]
    RtdThreeStage,
    #[serde(rename = "hsi")]
    Hsi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Single,
    Stage1,
    Stage2,
    Stage3,
    Done,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Single => "single",
            Stage::Stage1 => "stage1",
            Stage::Stage2 => "stage2",
            Stage::Stage3 => "stage3",
            Stage::Done => "done",
        }
    }
}

/// Everything that shapes a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub seed: u64,
    pub bank_width: usize,
    pub trunk_width: usize,
    pub dropout_rate: f64,
    pub detector_init: InitScheme,
    pub generator_width: usize,
    /// Initial weight deviation of the generator output layer.
    pub generator_output_std: f64,
    pub discriminator_widths: Vec<usize>,
    /// Hidden-layer init of the generator and discriminator (`fixed` or `he`).
    pub adversary_init: InitScheme,
    pub sampler: SamplerConfig,
    pub stage_iterations: usize,
    pub single_stage_iterations: usize,
    pub detector_lr: f64,
    pub generator_lr: f64,
    pub discriminator_lr: f64,
    pub lr_drop_every: usize,
    pub single_stage_lr_drop_every: usize,
    pub lr_drop_factor: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Real negatives per discriminator/generator iteration.
    pub adversarial_batch: usize,
    /// Generated negatives added to the candidate pool per detector
    /// iteration of the last stage.
    pub generated_per_iteration: usize,
    /// Start the last stage with zero detector velocity.
    pub reset_detector_velocity: bool,
    pub checkpoint_every: usize,
    /// Cap on the joint gradient norm of each network update; unset means
    /// no clipping.
    pub max_grad_norm: Option<f64>,
    /// Training pixels per category (HSI mode).
    pub hsi_per_class: usize,
    /// Fraction of each HSI batch replaced by generated examples in the
    /// last stage.
    pub hsi_generated_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::RtdThreeStage,
            seed: 0,
            bank_width: 100,
            trunk_width: 200,
            dropout_rate: 0.5,
            detector_init: InitScheme::Fixed,
            generator_width: 16,
            generator_output_std: 50.0,
            discriminator_widths: vec![32, 64, 128, 256],
            adversary_init: InitScheme::Fixed,
            sampler: SamplerConfig::default(),
            stage_iterations: 1250,
            single_stage_iterations: 2500,
            detector_lr: 0.01,
            generator_lr: 0.01,
            discriminator_lr: 0.0001,
            lr_drop_every: 500,
            single_stage_lr_drop_every: 1000,
            lr_drop_factor: 10.0,
            momentum: 0.9,
            weight_decay: 0.0005,
            adversarial_batch: 256,
            generated_per_iteration: 256,
            reset_detector_velocity: true,
            checkpoint_every: 250,
            max_grad_norm: None,
            hsi_per_class: 200,
            hsi_generated_fraction: 0.25,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        for (name, v) in [
            ("detector_lr", self.detector_lr),
            ("generator_lr", self.generator_lr),
            ("discriminator_lr", self.discriminator_lr),
            ("momentum", self.momentum),
            ("weight_decay", self.weight_decay),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and non-negative")));
            }
        }
        if self.max_grad_norm.is_some_and(|v| !(v.is_finite() && v > 0.0)) {
            return Err(Error::Config("max_grad_norm must be positive".into()));
        }
        if !(self.lr_drop_factor.is_finite() && self.lr_drop_factor > 0.0) {
            return Err(Error::Config("lr_drop_factor must be positive".into()));
        }
        if self.adversarial_batch == 0 {
            return Err(Error::Config("adversarial_batch must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.hsi_generated_fraction) {
            return Err(Error::Config("hsi_generated_fraction must lie in [0, 1]".into()));
        }
        self.detector_spec(1, 1).validate()?;
        Ok(())
    }

    pub fn detector_spec(&self, channels: usize, outputs: usize) -> DetectorSpec {
        let mut spec = DetectorSpec::new(channels).with_widths(self.bank_width, self.trunk_width);
        spec.dropout_rate = self.dropout_rate;
        spec.output_units = outputs;
        spec.init = self.detector_init;
        spec
    }

    pub fn generator_spec(&self, channels: usize) -> GeneratorSpec {
        GeneratorSpec {
            channels,
            base_width: self.generator_width,
            output_std: self.generator_output_std,
            init: self.adversary_init,
        }
    }

    pub fn discriminator_spec(&self, channels: usize) -> DiscriminatorSpec {
        DiscriminatorSpec {
            channels,
            conv_widths: self.discriminator_widths.clone(),
            init: self.adversary_init,
        }
    }

    fn schedule(&self, base_lr: f64, iterations: usize, drop_every: usize) -> StageSchedule {
        StageSchedule {
            iterations,
            base_lr,
            lr_drop_every: drop_every,
            lr_drop_factor: self.lr_drop_factor,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
        }
    }

    pub fn detector_schedule(&self, stage: Stage) -> StageSchedule {
        match stage {
            Stage::Single => self.schedule(self.detector_lr, self.single_stage_iterations, self.single_stage_lr_drop_every),
            _ => self.schedule(self.detector_lr, self.stage_iterations, self.lr_drop_every),
        }
    }

    pub fn generator_schedule(&self) -> StageSchedule {
        self.schedule(self.generator_lr, self.stage_iterations, self.lr_drop_every)
    }

    pub fn discriminator_schedule(&self) -> StageSchedule {
        self.schedule(self.discriminator_lr, self.stage_iterations, self.lr_drop_every)
    }

    pub fn first_stage(&self) -> Stage {
        match self.mode {
            TrainMode::RtdSingle => Stage::Single,
            _ => Stage::Stage1,
        }
    }

    pub fn stage_length(&self, stage: Stage) -> usize {
        match stage {
            Stage::Single => self.single_stage_iterations,
            Stage::Done => 0,
            _ => self.stage_iterations,
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub stage: Stage,
    pub iteration: usize,
    /// Learning rate of the network being trained (the generator in stage 2).
    pub lr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discriminator_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discriminator_lr: Option<f64>,
    /// Mean detector score of generated patches (stage 2).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive_raster: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negative_raster: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerTelemetry>,
}

impl TelemetryRecord {
    fn new(stage: Stage, iteration: usize, lr: f64) -> Self {
        TelemetryRecord {
            stage,
            iteration,
            lr,
            detector_loss: None,
            discriminator_loss: None,
            generator_loss: None,
            discriminator_lr: None,
            generated_score: None,
            positive_raster: None,
            negative_raster: None,
            sampler: None,
        }
    }
}

/// Normalized training rasters with their usable labeled centers.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub rasters: BTreeMap<String, Raster>,
    pub positive_ids: Vec<String>,
    pub negative_ids: Vec<String>,
    pub positives: BTreeMap<String, Vec<PatchCenter>>,
    pub stats: ChannelStats,
    pub channels: usize,
}

impl TrainingData {
    /// Statistics come from the training rasters only.
    pub fn from_dataset(ds: &Dataset) -> Result<Self> {
        let stats = ChannelStats::from_rasters(ds.train_rasters())?;
        let mut rasters = BTreeMap::new();
        for r in ds.train_rasters() {
            rasters.insert(r.id.clone(), normalize(r, &stats)?);
        }
        let mut positives = BTreeMap::new();
        for (id, r) in &rasters {
            let centers: Vec<PatchCenter> = ds
                .train
                .usable_positives(id, r)
                .into_iter()
                .map(|(row, col)| PatchCenter {
                    raster_id: id.clone(),
                    row,
                    col,
                })
                .collect();
            if !centers.is_empty() {
                positives.insert(id.clone(), centers);
            }
        }
        let positive_ids: Vec<String> = positives.keys().cloned().collect();
        let negative_ids = ds.train.negative_raster_ids.clone();
        if positive_ids.is_empty() || negative_ids.is_empty() {
            return Err(Error::CannotComposeBatch(
                "training needs a positive raster with usable labels and a negative raster".into(),
            ));
        }
        let channels = rasters.values().next().map(|r| r.channels).unwrap_or(0);
        Ok(TrainingData {
            rasters,
            positive_ids,
            negative_ids,
            positives,
            stats,
            channels,
        })
    }

    fn pair(&self, t: usize) -> (&str, &str) {
        (
            &self.positive_ids[t % self.positive_ids.len()],
            &self.negative_ids[t % self.negative_ids.len()],
        )
    }
}

/// Where checkpoints and telemetry go, and how far to run.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    /// Stop after this many iterations of this call (for interruption).
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunOutcome {
    Finished,
    Interrupted,
}

pub const TELEMETRY_FILE: &str = "telemetry.jsonl";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

pub fn checkpoint_path(dir: &Path, stage: Stage, iteration: usize) -> PathBuf {
    dir.join("checkpoints").join(format!("{}-{iteration:05}.ckpt", stage.name()))
}

fn detector_outputs(config: &TrainConfig, classes: usize) -> usize {
    if config.mode == TrainMode::Hsi {
        classes
    } else {
        1
    }
}

impl TrainState {
    /// Fresh parameters and RNG for `(config, seed)`.
    pub fn initialize(config: &TrainConfig, channels: usize, classes: usize, stats: ChannelStats) -> Result<Self> {
        config.validate()?;
        let mut master = ChaCha8Rng::seed_from_u64(config.seed);
        let detector_spec = config.detector_spec(channels, detector_outputs(config, classes));
        let generator_spec = config.generator_spec(channels);
        let discriminator_spec = config.discriminator_spec(channels);
        detector_spec.validate()?;
        generator_spec.validate()?;
        discriminator_spec.validate()?;
        let detector = init_params(&detector_spec, master.random());
        let generator = init_params(&generator_spec, master.random());
        let discriminator = init_params(&discriminator_spec, master.random());
        let rng = ChaCha8Rng::seed_from_u64(master.random());
        Ok(TrainState {
            config: config.clone(),
            detector_spec,
            generator_spec,
            discriminator_spec,
            detector,
            generator,
            discriminator,
            velocity: BTreeMap::new(),
            stage: config.first_stage(),
            iteration: 0,
            rng,
            stats,
            telemetry: Vec::new(),
        })
    }

    fn velocity_of(&mut self, network: &str) -> &mut Grads {
        self.velocity.entry(network.to_string()).or_default()
    }

    fn advance_stage(&mut self) {
        self.stage = match (self.config.mode, self.stage) {
            (_, Stage::Single) | (_, Stage::Stage3) | (_, Stage::Done) => Stage::Done,
            (_, Stage::Stage1) => Stage::Stage2,
            (_, Stage::Stage2) => {
                if self.config.reset_detector_velocity {
                    self.velocity.remove("detector");
                }
                Stage::Stage3
            }
        };
        self.iteration = 0;
    }

    fn clip(&self, grads: &mut Grads) {
        if let Some(max) = self.config.max_grad_norm {
            clip_grad_norm(grads, max);
        }
    }

    fn diverged(&self, reason: impl Into<String>) -> Error {
        Error::Divergence {
            stage: self.stage.name().into(),
            iteration: self.iteration,
            reason: reason.into(),
        }
    }

    /// One SGD step of the detector on a batch; returns the batch loss.
    fn detector_update(&mut self, inputs: &Tensor, targets: &[f64], lr: f64) -> Result<f64> {
        let mut dropout = ChaCha8Rng::seed_from_u64(self.rng.random());
        let trace = forward_train(&self.detector_spec, &self.detector, inputs, Some(&mut dropout))?;
        let n = inputs.shape()[0];
        let k = self.detector_spec.output_units;
        let scores = trace.scores.data();
        let loss = if k == 1 {
            let labels: Vec<u8> = targets.iter().map(|&t| t as u8).collect();
            detector_loss(scores, &labels)?.scalar
        } else {
            let labels: Vec<usize> = targets.iter().map(|&t| t as usize).collect();
            crate::losses::hsi_detector_loss(&trace.scores, &labels)?.scalar
        };
        if !loss.is_finite() {
            return Err(self.diverged("non-finite detector loss"));
        }
        let dense_targets: Vec<f64> = if k == 1 {
            targets.to_vec()
        } else {
            targets
                .iter()
                .flat_map(|&t| (0..k).map(move |j| (j == t as usize) as u8 as f64))
                .collect()
        };
        let grad = Tensor::from_vec(&[n, k], logit_grad(scores, &dense_targets, n))?;
        let (mut grads, _) = backward_train(&self.detector_spec, &self.detector, inputs, &trace, &grad, false);
        self.clip(&mut grads);
        let (m, wd) = (self.config.momentum, self.config.weight_decay);
        let mut velocity = std::mem::take(self.velocity_of("detector"));
        let step = sgd_step(&mut self.detector, &grads, &mut velocity, lr, m, wd);
        self.velocity.insert("detector".into(), velocity);
        step.map_err(|_| self.diverged("non-finite detector gradient"))?;
        Ok(loss)
    }
}

/// Generated counterparts of `sources`, tagged as generated.
pub fn generate_negatives(
    spec: &GeneratorSpec,
    params: &crate::models::ModelParams,
    sources: &[Patch],
) -> Result<Vec<Patch>> {
    if sources.is_empty() {
        return Ok(Vec::new());
    }
    let c = sources[0].channels;
    let x = Tensor::from_vec(
        &[sources.len(), c, 25, 25],
        sources.iter().flat_map(|p| p.values.iter().copied()).collect(),
    )?;
    let out = generator::generator_forward(spec, params, &x)?;
    Ok(sources
        .iter()
        .enumerate()
        .map(|(i, p)| Patch {
            values: out.outer(i).to_vec(),
            provenance: Provenance::Generated,
            ..p.clone()
        })
        .collect())
}

fn detector_iteration(state: &mut TrainState, data: &TrainingData) -> Result<TelemetryRecord> {
    let stage = state.stage;
    let t = state.iteration;
    let lr = state.config.detector_schedule(stage).lr(t);
    let (pos_id, neg_id) = data.pair(t);
    let sampler = state.config.sampler.clone();
    let windows = sample_negative_windows(&data.rasters[neg_id], &sampler, &mut state.rng)?;
    let mut pool = CandidatePool::build(data.positives[pos_id].clone(), windows);
    if stage == Stage::Stage3 && state.config.generated_per_iteration > 0 {
        let take = state.config.generated_per_iteration.min(pool.negatives.len());
        let sources = sample(&mut state.rng, pool.negatives.len(), take)
            .into_iter()
            .map(|i| {
                let c = &pool.negatives[i].center;
                let mut p = extract_patch(&data.rasters[&c.raster_id], c.row, c.col)?;
                p.provenance = Provenance::Real;
                Ok(p)
            })
            .collect::<Result<Vec<_>>>()?;
        let generated = generate_negatives(&state.generator_spec, &state.generator, &sources)?;
        if generated.iter().any(|p| p.values.iter().any(|v| !v.is_finite())) {
            return Err(state.diverged("generator produced non-finite patches"));
        }
        pool = merge_generated_negatives(pool, generated);
    }
    if sampler.hard_mining {
        pool = score_candidates(pool, &state.detector_spec, &state.detector, &data.rasters)?;
    }
    let selection = select_hard_batch(&pool, &sampler, &mut state.rng)?;
    let batch: PatchBatch = compose_batch(&pool, &selection, &data.rasters, data.channels)?;
    let targets: Vec<f64> = batch.labels.iter().map(|&l| l as f64).collect();
    let loss = state.detector_update(&batch.inputs, &targets, lr)?;
    let mut rec = TelemetryRecord::new(stage, t, lr);
    rec.detector_loss = Some(loss);
    rec.positive_raster = Some(pos_id.to_string());
    rec.negative_raster = Some(neg_id.to_string());
    rec.sampler = Some(telemetry(&pool, &batch));
    Ok(rec)
}

/// Random real negative patches, one per 25x25 window.
fn real_negative_batch(state: &mut TrainState, raster: &Raster, n: usize) -> Result<Tensor> {
    let cfg = SamplerConfig {
        window_size: [25, 25],
        window_count: n,
        ..state.config.sampler.clone()
    };
    let windows = sample_negative_windows(raster, &cfg, &mut state.rng)?;
    let mut values = Vec::with_capacity(n * raster.channels * 625);
    for w in windows {
        values.extend(raster.window_f64(w.row, w.col, 25, 25));
    }
    Tensor::from_vec(&[n, raster.channels, 25, 25], values)
}

fn adversarial_iteration(state: &mut TrainState, data: &TrainingData) -> Result<TelemetryRecord> {
    let t = state.iteration;
    let (_, neg_id) = data.pair(t);
    let n = state.config.adversarial_batch;
    let real = real_negative_batch(state, &data.rasters[neg_id], n)?;
    let mut rec = adversarial_update(state, &real, None)?;
    rec.negative_raster = Some(neg_id.to_string());
    Ok(rec)
}

/// One discriminator step followed by one generator step.
///
/// `adversarial_targets` switches the detector term to per-example
/// category targets (HSI mode); otherwise generated patches aim for the
/// positive class.
fn adversarial_update(state: &mut TrainState, real: &Tensor, adversarial_targets: Option<&[usize]>) -> Result<TelemetryRecord> {
    let t = state.iteration;
    let n = real.shape()[0];
    let g_lr = state.config.generator_schedule().lr(t);
    let d_lr = state.config.discriminator_schedule().lr(t);
    let (m, wd) = (state.config.momentum, state.config.weight_decay);

    // Discriminator: real negatives against 1, generated against 0.
    let gen = generator::forward_trace(&state.generator_spec, &state.generator, real)?.output;
    if !gen.is_finite() {
        return Err(state.diverged("generator produced non-finite patches"));
    }
    let d_real = discriminator::forward_trace(&state.discriminator_spec, &state.discriminator, real)?;
    let d_fake = discriminator::forward_trace(&state.discriminator_spec, &state.discriminator, &gen)?;
    let d_loss = discriminator_loss(d_real.scores.data(), d_fake.scores.data())?.scalar;
    if !d_loss.is_finite() {
        return Err(state.diverged("non-finite discriminator loss"));
    }
    let g_real = Tensor::from_vec(&[n, 1], logit_grad(d_real.scores.data(), &vec![1.0; n], n))?;
    let g_fake = Tensor::from_vec(&[n, 1], logit_grad(d_fake.scores.data(), &vec![0.0; n], n))?;
    let (mut d_grads, _) = discriminator::backward(&state.discriminator, &d_real, &g_real, false);
    let (fake_grads, _) = discriminator::backward(&state.discriminator, &d_fake, &g_fake, false);
    for (k, g) in fake_grads {
        d_grads.get_mut(&k).expect("same layout").add_assign(&g);
    }
    state.clip(&mut d_grads);
    let mut velocity = std::mem::take(state.velocity_of("discriminator"));
    let step = sgd_step(&mut state.discriminator, &d_grads, &mut velocity, d_lr, m, wd);
    state.velocity.insert("discriminator".into(), velocity);
    step.map_err(|_| state.diverged("non-finite discriminator gradient"))?;

    // Generator: fool the frozen detector and the updated discriminator.
    let g_trace = generator::forward_trace(&state.generator_spec, &state.generator, real)?;
    let det = forward_train::<ChaCha8Rng>(&state.detector_spec, &state.detector, &g_trace.output, None)?;
    let disc = discriminator::forward_trace(&state.discriminator_spec, &state.discriminator, &g_trace.output)?;
    let k = state.detector_spec.output_units;
    let (g_loss, det_grad, det_score) = match adversarial_targets {
        None => {
            let loss = hng_loss(det.scores.data(), disc.scores.data())?.scalar;
            let grad = logit_grad(det.scores.data(), &vec![1.0; n], n);
            let mean = det.scores.data().iter().sum::<f64>() / n as f64;
            (loss, grad, mean)
        }
        Some(targets) => {
            let det_loss = crate::losses::hsi_detector_loss(&det.scores, targets)?.scalar;
            let disc_loss = detector_loss(disc.scores.data(), &vec![1; n])?.scalar;
            let dense: Vec<f64> = targets
                .iter()
                .flat_map(|&a| (0..k).map(move |j| (j == a) as u8 as f64))
                .collect();
            let hit = targets
                .iter()
                .enumerate()
                .map(|(i, &a)| det.scores.data()[i * k + a])
                .sum::<f64>()
                / n as f64;
            (det_loss + disc_loss, logit_grad(det.scores.data(), &dense, n), hit)
        }
    };
    if !g_loss.is_finite() {
        return Err(state.diverged("non-finite generator loss"));
    }
    let det_grad = Tensor::from_vec(&[n, k], det_grad)?;
    let (_, gx_det) = backward_train(&state.detector_spec, &state.detector, &g_trace.output, &det, &det_grad, true);
    let disc_grad = Tensor::from_vec(&[n, 1], logit_grad(disc.scores.data(), &vec![1.0; n], n))?;
    let (_, gx_disc) = discriminator::backward(&state.discriminator, &disc, &disc_grad, true);
    let mut gx = gx_det.expect("input grad requested");
    gx.add_assign(&gx_disc.expect("input grad requested"));
    let mut g_grads = generator::backward(&state.generator_spec, &state.generator, &g_trace, &gx);
    state.clip(&mut g_grads);
    let mut velocity = std::mem::take(state.velocity_of("generator"));
    let step = sgd_step(&mut state.generator, &g_grads, &mut velocity, g_lr, m, wd);
    state.velocity.insert("generator".into(), velocity);
    step.map_err(|_| state.diverged("non-finite generator gradient"))?;

    let mut rec = TelemetryRecord::new(Stage::Stage2, t, g_lr);
    rec.discriminator_loss = Some(d_loss);
    rec.generator_loss = Some(g_loss);
    rec.discriminator_lr = Some(d_lr);
    rec.generated_score = Some(det_score);
    Ok(rec)
}

enum Task<'a> {
    Detection(&'a TrainingData),
    Hsi(&'a HsiData),
}

fn step(state: &mut TrainState, task: &Task) -> Result<TelemetryRecord> {
    match (task, state.stage) {
        (Task::Detection(d), Stage::Single | Stage::Stage1 | Stage::Stage3) => detector_iteration(state, d),
        (Task::Detection(d), Stage::Stage2) => adversarial_iteration(state, d),
        (Task::Hsi(d), Stage::Stage1 | Stage::Stage3) => hsi::detector_iteration(state, d),
        (Task::Hsi(d), Stage::Stage2) => hsi::adversarial_iteration(state, d),
        (_, stage) => Err(Error::Config(format!("no training step for stage {}", stage.name()))),
    }
}

fn append_telemetry(dir: &Path, rec: &TelemetryRecord) -> Result<()> {
    use std::io::Write;
    let path = dir.join(TELEMETRY_FILE);
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| Error::io(&path, e))?;
    let line = serde_json::to_string(rec).expect("telemetry serializes");
    writeln!(f, "{line}").map_err(|e| Error::io(&path, e))
}

fn save_checkpoint(state: &TrainState, dir: &Path, name: PathBuf) -> Result<()> {
    if let Some(parent) = name.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    state.to_archive().save(&name)?;
    log::info!("checkpoint {}", name.display());
    let _ = dir;
    Ok(())
}

fn run_task(state: &mut TrainState, task: &Task, opts: &RunOptions, stop_at: Option<Stage>) -> Result<RunOutcome> {
    if let Some(dir) = &opts.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        // Rewrite the log from the state so a resumed run continues cleanly.
        let path = dir.join(TELEMETRY_FILE);
        let mut text = String::new();
        for rec in &state.telemetry {
            text.push_str(&serde_json::to_string(rec).expect("telemetry serializes"));
            text.push('\n');
        }
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    let mut budget = opts.max_iterations;
    loop {
        if state.stage == Stage::Done || Some(state.stage) == stop_at {
            if let Some(dir) = &opts.out_dir {
                if state.stage == Stage::Done {
                    save_checkpoint(state, dir, dir.join(FINAL_CHECKPOINT))?;
                }
            }
            return Ok(RunOutcome::Finished);
        }
        if state.iteration >= state.config.stage_length(state.stage) {
            state.advance_stage();
            continue;
        }
        if budget == Some(0) {
            if let Some(dir) = &opts.out_dir {
                save_checkpoint(state, dir, dir.join("interrupted.ckpt"))?;
            }
            return Ok(RunOutcome::Interrupted);
        }
        let rec = match step(state, task) {
            Ok(rec) => rec,
            Err(e) => {
                if let (Some(dir), Error::Divergence { .. }) = (&opts.out_dir, &e) {
                    save_checkpoint(state, dir, dir.join("diverged.ckpt"))?;
                }
                return Err(e);
            }
        };
        if let Some(dir) = &opts.out_dir {
            append_telemetry(dir, &rec)?;
        }
        state.telemetry.push(rec);
        state.iteration += 1;
        budget = budget.map(|b| b - 1);
        let every = state.config.checkpoint_every;
        let stage_end = state.iteration == state.config.stage_length(state.stage);
        if let Some(dir) = &opts.out_dir {
            if (every > 0 && state.iteration % every == 0) || stage_end {
                save_checkpoint(state, dir, checkpoint_path(dir, state.stage, state.iteration))?;
            }
        }
    }
}

/// Continue a detection run until it finishes or the budget runs out.
pub fn run(state: &mut TrainState, data: &TrainingData, opts: &RunOptions) -> Result<RunOutcome> {
    run_task(state, &Task::Detection(data), opts, None)
}

/// Continue an HSI run until it finishes or the budget runs out.
pub fn run_hsi(state: &mut TrainState, data: &HsiData, opts: &RunOptions) -> Result<RunOutcome> {
    run_task(state, &Task::Hsi(data), opts, None)
}

fn run_one_stage(state: &mut TrainState, data: &TrainingData, expect: Stage) -> Result<()> {
    if state.stage != expect {
        return Err(Error::Config(format!(
            "expected a state at the start of {}, found {}",
            expect.name(),
            state.stage.name()
        )));
    }
    let next = match expect {
        Stage::Stage1 => Some(Stage::Stage2),
        Stage::Stage2 => Some(Stage::Stage3),
        _ => None,
    };
    run_task(state, &Task::Detection(data), &RunOptions::default(), next)?;
    Ok(())
}

/// Stage 1: detector training with hard example mining.
pub fn run_stage1(data: &TrainingData, config: &TrainConfig, seed: u64) -> Result<TrainState> {
    let config = TrainConfig {
        mode: TrainMode::RtdThreeStage,
        seed,
        ..config.clone()
    };
    let mut state = TrainState::initialize(&config, data.channels, 1, data.stats.clone())?;
    run_one_stage(&mut state, data, Stage::Stage1)?;
    Ok(state)
}

/// Stage 2: alternating discriminator and generator updates; the detector
/// is frozen.
pub fn run_stage2(mut state: TrainState, data: &TrainingData) -> Result<TrainState> {
    run_one_stage(&mut state, data, Stage::Stage2)?;
    Ok(state)
}

/// Stage 3: detector retraining on real and generated negatives; the
/// generator is frozen.
pub fn run_stage3(mut state: TrainState, data: &TrainingData) -> Result<TrainState> {
    run_one_stage(&mut state, data, Stage::Stage3)?;
    Ok(state)
}

/// Detector-only training with the single-stage schedule.
pub fn run_single_stage(data: &TrainingData, config: &TrainConfig, seed: u64) -> Result<TrainState> {
    let config = TrainConfig {
        mode: TrainMode::RtdSingle,
        seed,
        ..config.clone()
    };
    let mut state = TrainState::initialize(&config, data.channels, 1, data.stats.clone())?;
    run_one_stage(&mut state, data, Stage::Single)?;
    Ok(state)
}

/// Start (or continue) a full detection run in the configured mode.
pub fn train_detection(data: &TrainingData, config: &TrainConfig, opts: &RunOptions) -> Result<(TrainState, RunOutcome)> {
    let mut state = TrainState::initialize(config, data.channels, 1, data.stats.clone())?;
    let outcome = run(&mut state, data, opts)?;
    Ok((state, outcome))
}

/// Least-squares slope of `values` against their index.
pub fn trend_slope(values: &[f64]) -> Option<f64> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let mean_x = (n - 1) as f64 / 2.0;
    let mean_y = values.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &y) in values.iter().enumerate() {
        let dx = i as f64 - mean_x;
        sxy += dx * (y - mean_y);
        sxx += dx * dx;
    }
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_line() {
        assert!((trend_slope(&[1.0, 3.0, 5.0, 7.0]).unwrap() - 2.0).abs() < 1e-12);
        assert!(trend_slope(&[1.0]).is_none());
    }

    #[test]
    fn defaults_follow_the_published_schedule() {
        let c = TrainConfig::default();
        assert_eq!(c.detector_schedule(Stage::Stage1).lr(600), 0.001);
        assert_eq!(c.discriminator_schedule().lr(0), 0.0001);
        assert!((c.detector_schedule(Stage::Single).lr(1500) - 0.001).abs() < 1e-15);
        assert_eq!(c.sampler.batch_split(), (64, 192));
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let err = toml::from_str::<TrainConfig>("seed = 3\nbogus = 1\n");
        assert!(err.is_err());
        let ok: TrainConfig = toml::from_str("mode = \"rtd-single\"\n[sampler]\nwindow_count = 5\n").unwrap();
        assert_eq!(ok.mode, TrainMode::RtdSingle);
        assert_eq!(ok.sampler.window_count, 5);
        assert_eq!(ok.sampler.batch_size, 256);
    }
}
