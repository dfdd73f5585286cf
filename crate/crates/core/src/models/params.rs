use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Gaussian initialization for one tensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub mean: f64,
    pub std: f64,
}

impl InitSpec {
    pub const ZERO: InitSpec = InitSpec { mean: 0.0, std: 0.0 };

    pub fn gaussian(std: f64) -> Self {
        InitSpec { mean: 0.0, std }
    }
}

/// One entry of a network's parameter layout.
#[derive(Debug, Clone)]
pub struct ParamSlot {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: InitSpec,
}

impl ParamSlot {
    pub fn new(name: impl Into<String>, shape: &[usize], init: InitSpec) -> Self {
        ParamSlot {
            name: name.into(),
            shape: shape.to_vec(),
            init,
        }
    }
}

/// Anything with a fixed, named parameter layout.
pub trait Architecture {
    fn layout(&self) -> Vec<ParamSlot>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub value: Tensor,
    pub init: InitSpec,
}

/// Named parameter tensors of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub tensors: BTreeMap<String, ParamTensor>,
    pub seed: u64,
}

/// Gradients keyed by parameter name.
pub type Grads = BTreeMap<String, Tensor>;

impl ModelParams {
    pub fn get(&self, name: &str) -> &Tensor {
        &self
            .tensors
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
            .value
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        &mut self
            .tensors
            .get_mut(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
            .value
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn param_count(&self) -> usize {
        self.tensors.values().map(|p| p.value.len()).sum()
    }

    /// Zero-filled gradient map with this parameter set's shapes.
    pub fn zeros_like(&self) -> Grads {
        self.tensors
            .iter()
            .map(|(k, v)| (k.clone(), Tensor::zeros(v.value.shape())))
            .collect()
    }

    /// Check that this parameter set matches a layout exactly.
    pub fn check_layout(&self, layout: &[ParamSlot]) -> Result<()> {
        if layout.len() != self.tensors.len() {
            return Err(Error::Shape(format!(
                "parameter count mismatch: layout has {}, params have {}",
                layout.len(),
                self.tensors.len()
            )));
        }
        for slot in layout {
            let p = self
                .tensors
                .get(&slot.name)
                .ok_or_else(|| Error::Shape(format!("missing parameter {}", slot.name)))?;
            if p.value.shape() != slot.shape.as_slice() {
                return Err(Error::Shape(format!(
                    "parameter {} has shape {:?}, expected {:?}",
                    slot.name,
                    p.value.shape(),
                    slot.shape
                )));
            }
        }
        Ok(())
    }
}

/// Draw every tensor of `arch` from its init spec, in layout order.
pub fn init_params<A: Architecture + ?Sized>(arch: &A, seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tensors = arch
        .layout()
        .into_iter()
        .map(|slot| {
            let value = Tensor::randn(&slot.shape, slot.init.mean, slot.init.std, &mut rng);
            (slot.name, ParamTensor { value, init: slot.init })
        })
        .collect();
    ModelParams { tensors, seed }
}
