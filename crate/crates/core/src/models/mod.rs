//! Network definitions: detector, hard negative generator, discriminator.

pub mod checkpoint;
pub mod detector;
pub mod discriminator;
pub mod generator;
mod params;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use checkpoint::TensorArchive;
pub use detector::{detector_forward, DetectorSpec, InitScheme, Mode, Region, PATCH_HALF, PATCH_SIZE};
pub use discriminator::{discriminator_forward, DiscriminatorSpec};
pub use generator::{generator_forward, GeneratorSpec};
pub use params::{init_params, Architecture, Grads, InitSpec, ModelParams, ParamSlot, ParamTensor};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Serialize, Deserialize)]
struct ParamsMeta {
    seed: u64,
    init: BTreeMap<String, InitSpec>,
}

/// Insert `params` into an archive under `prefix/`, returning its metadata.
pub fn pack_params(params: &ModelParams, prefix: &str, tensors: &mut BTreeMap<String, Tensor>) -> serde_json::Value {
    let mut init = BTreeMap::new();
    for (name, p) in &params.tensors {
        tensors.insert(format!("{prefix}/{name}"), p.value.clone());
        init.insert(name.clone(), p.init);
    }
    serde_json::to_value(ParamsMeta { seed: params.seed, init }).expect("serializable")
}

/// Inverse of [`pack_params`].
pub fn unpack_params(meta: &serde_json::Value, prefix: &str, tensors: &BTreeMap<String, Tensor>) -> Result<ModelParams> {
    let meta: ParamsMeta =
        serde_json::from_value(meta.clone()).map_err(|e| Error::Checkpoint(format!("{prefix} metadata: {e}")))?;
    let mut out = BTreeMap::new();
    for (name, init) in meta.init {
        let key = format!("{prefix}/{name}");
        let value = tensors
            .get(&key)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {key}")))?
            .clone();
        out.insert(name, ParamTensor { value, init });
    }
    Ok(ModelParams {
        tensors: out,
        seed: meta.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn archive_round_trip_is_bit_exact() {
        let spec = DetectorSpec::new(3).with_widths(2, 4);
        let params = init_params(&spec, 9);
        let mut tensors = BTreeMap::new();
        let meta = pack_params(&params, "detector", &mut tensors);
        let archive = TensorArchive {
            metadata: serde_json::json!({ "detector": meta, "spec": spec }),
            tensors,
        };
        let back = TensorArchive::from_bytes(&archive.to_bytes()).unwrap();
        assert_eq!(back, archive);
        let restored = unpack_params(&back.metadata["detector"], "detector", &back.tensors).unwrap();
        assert_eq!(restored, params);
    }

    #[test]
    fn truncated_archive_is_rejected() {
        let archive = TensorArchive {
            metadata: serde_json::json!({}),
            tensors: BTreeMap::from([("a".to_string(), Tensor::zeros(&[3]))]),
        };
        let bytes = archive.to_bytes();
        assert!(TensorArchive::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(TensorArchive::from_bytes(b"NOTCKPT").is_err());
    }
}
