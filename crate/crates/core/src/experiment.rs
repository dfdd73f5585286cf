//! The three-way training comparison on a synthetic benchmark: detector
//! alone with uniform negatives, detector with hard example mining, and
//! the full 3-stage schedule.

use serde::{Deserialize, Serialize};

use crate::data::dataset::Dataset;
use crate::data::raster::normalize;
use crate::data::synth::{generate_benchmark, BenchmarkConfig};
use crate::error::Result;
use crate::evaluation::{roc_variation_curve, EvalCurve};
use crate::inference::{sliding_window_infer, ScoreMap, DEFAULT_WINDOW};
use crate::training::{run_single_stage, run_stage1, run_stage2, run_stage3, trend_slope, Stage, TrainConfig, TrainState, TrainingData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    SinglePlain,
    SingleMining,
    ThreeStage,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::SinglePlain, Variant::SingleMining, Variant::ThreeStage];

    pub fn name(self) -> &'static str {
        match self {
            Variant::SinglePlain => "single-plain",
            Variant::SingleMining => "single-mining",
            Variant::ThreeStage => "three-stage",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub benchmark: BenchmarkConfig,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub window: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            benchmark: BenchmarkConfig::default(),
            train: TrainConfig::default(),
            seeds: vec![0, 1, 2, 3, 4],
            window: DEFAULT_WINDOW,
        }
    }
}

/// The shipped desk-scale comparison.
pub const DESK_EXPERIMENT_TOML: &str = include_str!("../../../configs/desk.toml");

impl ExperimentConfig {
    pub fn desk() -> Self {
        toml::from_str(DESK_EXPERIMENT_TOML).expect("desk config parses")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub variant: Variant,
    pub seed: u64,
    pub auc: f64,
    /// Stage-1 test AUC of a 3-stage run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage1_auc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_loss_slope: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_fraction_slope: Option<f64>,
}

/// Test-set curve of a trained detector; test rasters are normalized with
/// the training statistics.
pub fn test_curve(state: &TrainState, ds: &Dataset, window: usize) -> Result<EvalCurve> {
    let mut maps: Vec<ScoreMap> = Vec::new();
    let mut ids: Vec<&String> = ds.test.positives.keys().chain(&ds.test.negative_raster_ids).collect();
    ids.sort();
    ids.dedup();
    for id in ids {
        let raster = normalize(&ds.rasters[id], &state.stats)?;
        maps.push(sliding_window_infer(&raster, &state.detector_spec, &state.detector, (window, window))?);
    }
    roc_variation_curve(&maps, &ds.test)
}

/// Least-squares slope of the generator loss over stage 2.
pub fn generator_loss_slope(state: &TrainState) -> Option<f64> {
    let v: Vec<f64> = state
        .telemetry
        .iter()
        .filter(|r| r.stage == Stage::Stage2)
        .filter_map(|r| r.generator_loss)
        .collect();
    trend_slope(&v)
}

/// Least-squares slope of the per-batch generated fraction over stage 3.
pub fn generated_fraction_slope(state: &TrainState) -> Option<f64> {
    let v: Vec<f64> = state
        .telemetry
        .iter()
        .filter(|r| r.stage == Stage::Stage3)
        .filter_map(|r| r.sampler.as_ref().map(|s| s.generated_fraction))
        .collect();
    trend_slope(&v)
}

pub fn run_variant(ds: &Dataset, data: &TrainingData, cfg: &ExperimentConfig, variant: Variant, seed: u64) -> Result<VariantResult> {
    let mut train = cfg.train.clone();
    let mut result = VariantResult {
        variant,
        seed,
        auc: f64::NAN,
        stage1_auc: None,
        generator_loss_slope: None,
        generated_fraction_slope: None,
    };
    let state = match variant {
        Variant::SinglePlain | Variant::SingleMining => {
            train.sampler.hard_mining = variant == Variant::SingleMining;
            run_single_stage(data, &train, seed)?
        }
        Variant::ThreeStage => {
            let s1 = run_stage1(data, &train, seed)?;
            result.stage1_auc = Some(test_curve(&s1, ds, cfg.window)?.auc);
            let s3 = run_stage3(run_stage2(s1, data)?, data)?;
            result.generator_loss_slope = generator_loss_slope(&s3);
            result.generated_fraction_slope = generated_fraction_slope(&s3);
            s3
        }
    };
    result.auc = test_curve(&state, ds, cfg.window)?.auc;
    log::info!("{} seed {seed}: auc {:.4}", variant.name(), result.auc);
    Ok(result)
}

/// Every variant for every seed; seed `s` also selects the benchmark draw.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<VariantResult>> {
    let mut out = Vec::new();
    for &seed in &cfg.seeds {
        let ds = generate_benchmark(&cfg.benchmark, seed)?;
        let data = TrainingData::from_dataset(&ds)?;
        for v in Variant::ALL {
            out.push(run_variant(&ds, &data, cfg, v, seed)?);
        }
    }
    Ok(out)
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

pub fn median_auc(results: &[VariantResult], variant: Variant) -> Option<f64> {
    let v: Vec<f64> = results.iter().filter(|r| r.variant == variant).map(|r| r.auc).collect();
    median(&v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_config_is_valid() {
        let cfg = ExperimentConfig::desk();
        cfg.train.validate().unwrap();
        cfg.benchmark.scene.validate().unwrap();
        assert_eq!(cfg.seeds.len(), 5);
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
