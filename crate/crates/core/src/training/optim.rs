use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Grads, ModelParams};

/// Step learning-rate schedule of one network within one stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageSchedule {
    pub iterations: usize,
    pub base_lr: f64,
    pub lr_drop_every: usize,
    pub lr_drop_factor: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl StageSchedule {
    /// `base_lr / factor^floor(t / drop_every)`.
    pub fn lr(&self, iteration: usize) -> f64 {
        let drops = iteration.checked_div(self.lr_drop_every).unwrap_or(0);
        self.base_lr / self.lr_drop_factor.powi(drops as i32)
    }
}

/// Rescale `grads` so their joint L2 norm is at most `max_norm`; returns
/// the norm before rescaling.
pub fn clip_grad_norm(grads: &mut Grads, max_norm: f64) -> f64 {
    let norm = grads
        .values()
        .flat_map(|g| g.data().iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm.is_finite() {
        let scale = max_norm / norm;
        for g in grads.values_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= scale);
        }
    }
    norm
}

/// Classic momentum with weight decay folded into the gradient:
/// `v = momentum * v + lr * (g + wd * p)`, then `p -= v`.
///
/// Velocity entries are created on first use. Parameters are untouched when
/// any gradient is non-finite.
pub fn sgd_step(
    params: &mut ModelParams,
    grads: &Grads,
    velocity: &mut Grads,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    for (name, g) in grads {
        if !params.tensors.contains_key(name) {
            return Err(Error::Shape(format!("gradient for unknown parameter {name}")));
        }
        if g.shape() != params.get(name).shape() {
            return Err(Error::Shape(format!("gradient shape mismatch for {name}")));
        }
        if !g.is_finite() {
            return Err(Error::Divergence {
                stage: String::new(),
                iteration: 0,
                reason: format!("non-finite gradient for {name}"),
            });
        }
    }
    for (name, g) in grads {
        let p = params.get_mut(name);
        let v = velocity
            .entry(name.clone())
            .or_insert_with(|| crate::tensor::Tensor::zeros(g.shape()));
        for ((pv, vv), gv) in p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
            *vv = momentum * *vv + lr * (gv + weight_decay * *pv);
            *pv -= *vv;
        }
    }
    Ok(())
}
