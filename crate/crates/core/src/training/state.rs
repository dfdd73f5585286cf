use std::collections::BTreeMap;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Stage, TelemetryRecord, TrainConfig};
use crate::data::raster::ChannelStats;
use crate::error::{Error, Result};
use crate::models::{pack_params, unpack_params, DetectorSpec, DiscriminatorSpec, GeneratorSpec, Grads, ModelParams, TensorArchive};
use crate::tensor::Tensor;

const NETWORKS: [&str; 3] = ["detector", "generator", "discriminator"];

/// Everything needed to continue a run bit-exactly.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub config: TrainConfig,
    pub detector_spec: DetectorSpec,
    pub generator_spec: GeneratorSpec,
    pub discriminator_spec: DiscriminatorSpec,
    pub detector: ModelParams,
    pub generator: ModelParams,
    pub discriminator: ModelParams,
    /// Momentum buffers keyed by network name.
    pub velocity: BTreeMap<String, Grads>,
    pub stage: Stage,
    /// Iterations completed within `stage`.
    pub iteration: usize,
    pub rng: ChaCha8Rng,
    /// Normalization statistics of the training rasters.
    pub stats: ChannelStats,
    pub telemetry: Vec<TelemetryRecord>,
}

/// Serializable position of a ChaCha stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    /// 128-bit word position as a decimal string.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        use rand::SeedableRng;
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|_| Error::Checkpoint(format!("bad rng word position {:?}", self.word_pos)))?;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

#[derive(Serialize, Deserialize)]
struct StateMeta {
    kind: String,
    config: TrainConfig,
    detector_spec: DetectorSpec,
    generator_spec: GeneratorSpec,
    discriminator_spec: DiscriminatorSpec,
    params: BTreeMap<String, serde_json::Value>,
    velocity: BTreeMap<String, Vec<String>>,
    stage: Stage,
    iteration: usize,
    rng: RngState,
    stats: ChannelStats,
    telemetry: Vec<TelemetryRecord>,
}

const KIND: &str = "train-state";

impl TrainState {
    pub fn network(&self, name: &str) -> &ModelParams {
        match name {
            "detector" => &self.detector,
            "generator" => &self.generator,
            "discriminator" => &self.discriminator,
            _ => panic!("unknown network {name}"),
        }
    }

    pub fn to_archive(&self) -> TensorArchive {
        let mut tensors = BTreeMap::new();
        let mut params = BTreeMap::new();
        for net in NETWORKS {
            params.insert(net.to_string(), pack_params(self.network(net), net, &mut tensors));
        }
        let mut velocity = BTreeMap::new();
        for (net, grads) in &self.velocity {
            for (name, t) in grads {
                tensors.insert(format!("velocity/{net}/{name}"), t.clone());
            }
            velocity.insert(net.clone(), grads.keys().cloned().collect());
        }
        let meta = StateMeta {
            kind: KIND.into(),
            config: self.config.clone(),
            detector_spec: self.detector_spec.clone(),
            generator_spec: self.generator_spec.clone(),
            discriminator_spec: self.discriminator_spec.clone(),
            params,
            velocity,
            stage: self.stage,
            iteration: self.iteration,
            rng: RngState::capture(&self.rng),
            stats: self.stats.clone(),
            telemetry: self.telemetry.clone(),
        };
        TensorArchive {
            metadata: serde_json::to_value(meta).expect("state metadata serializes"),
            tensors,
        }
    }

    pub fn from_archive(archive: &TensorArchive) -> Result<Self> {
        let meta: StateMeta = serde_json::from_value(archive.metadata.clone())
            .map_err(|e| Error::Checkpoint(format!("not a training checkpoint: {e}")))?;
        if meta.kind != KIND {
            return Err(Error::Checkpoint(format!("unexpected checkpoint kind {}", meta.kind)));
        }
        let load = |net: &str| -> Result<ModelParams> {
            let m = meta
                .params
                .get(net)
                .ok_or_else(|| Error::Checkpoint(format!("missing {net} parameters")))?;
            unpack_params(m, net, &archive.tensors)
        };
        let detector = load("detector")?;
        let generator = load("generator")?;
        let discriminator = load("discriminator")?;
        use crate::models::Architecture;
        detector.check_layout(&meta.detector_spec.layout())?;
        generator.check_layout(&meta.generator_spec.layout())?;
        discriminator.check_layout(&meta.discriminator_spec.layout())?;
        let mut velocity = BTreeMap::new();
        for (net, names) in &meta.velocity {
            let mut grads: BTreeMap<String, Tensor> = BTreeMap::new();
            for name in names {
                let key = format!("velocity/{net}/{name}");
                let t = archive
                    .tensors
                    .get(&key)
                    .ok_or_else(|| Error::Checkpoint(format!("missing tensor {key}")))?;
                grads.insert(name.clone(), t.clone());
            }
            velocity.insert(net.clone(), grads);
        }
        Ok(TrainState {
            config: meta.config,
            detector_spec: meta.detector_spec,
            generator_spec: meta.generator_spec,
            discriminator_spec: meta.discriminator_spec,
            detector,
            generator,
            discriminator,
            velocity,
            stage: meta.stage,
            iteration: meta.iteration,
            rng: meta.rng.restore()?,
            stats: meta.stats,
            telemetry: meta.telemetry,
        })
    }
}

pub fn load_checkpoint(path: &Path) -> Result<TrainState> {
    TrainState::from_archive(&TensorArchive::load(path)?)
}
