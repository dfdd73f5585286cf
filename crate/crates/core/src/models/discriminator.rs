//! Real-vs-generated discriminator: four strided 3x3 convolutions
//! (25 -> 13 -> 7 -> 4 -> 2) followed by one fully connected sigmoid unit.

use serde::{Deserialize, Serialize};

use super::detector::{InitScheme, PATCH_SIZE};
use super::params::{Architecture, Grads, InitSpec, ModelParams, ParamSlot};
use crate::error::{Error, Result};
use crate::nn::{self, ConvGeom};
use crate::tensor::Tensor;

const STD_INIT: f64 = 0.02;
const GEOM: ConvGeom = ConvGeom {
    kernel: 3,
    stride: 2,
    pad: 1,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscriminatorSpec {
    pub channels: usize,
    pub conv_widths: Vec<usize>,
    #[serde(default)]
    pub init: InitScheme,
}

impl DiscriminatorSpec {
    pub fn new(channels: usize) -> Self {
        DiscriminatorSpec {
            channels,
            conv_widths: vec![32, 64, 128, 256],
            init: InitScheme::Fixed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.conv_widths.len() != 4 || self.conv_widths.contains(&0) {
            return Err(Error::Config("discriminator needs 4 positive conv widths".into()));
        }
        if self.init == InitScheme::WidthMatched {
            return Err(Error::Config("width-matched init applies to the detector only".into()));
        }
        Ok(())
    }

    fn final_side(&self) -> usize {
        (0..4).fold(PATCH_SIZE, |s, _| GEOM.out_len(s))
    }
}

impl Architecture for DiscriminatorSpec {
    fn layout(&self) -> Vec<ParamSlot> {
        let mut slots = Vec::new();
        let he = self.init == InitScheme::He;
        let mut cin = self.channels;
        for (i, &cout) in self.conv_widths.iter().enumerate() {
            let std = if he { (2.0 / (cin * 9) as f64).sqrt() } else { STD_INIT };
            slots.push(ParamSlot::new(format!("conv{}.weight", i + 1), &[cout, cin, 3, 3], InitSpec::gaussian(std)));
            slots.push(ParamSlot::new(format!("conv{}.bias", i + 1), &[cout], InitSpec::ZERO));
            cin = cout;
        }
        let side = self.final_side();
        let fan_in = cin * side * side;
        let std = if he { (1.0 / fan_in as f64).sqrt() } else { STD_INIT };
        slots.push(ParamSlot::new("fc.weight", &[1, fan_in], InitSpec::gaussian(std)));
        slots.push(ParamSlot::new("fc.bias", &[1], InitSpec::ZERO));
        slots
    }
}

pub struct DiscriminatorTrace {
    inputs: Vec<Tensor>,
    activated: Vec<Tensor>,
    flat: Tensor,
    pub logits: Tensor,
    pub scores: Tensor,
}

pub fn forward_trace(spec: &DiscriminatorSpec, params: &ModelParams, x: &Tensor) -> Result<DiscriminatorTrace> {
    if x.shape().len() != 4 {
        return Err(Error::Shape(format!("discriminator input must be NCHW, got {:?}", x.shape())));
    }
    let (n, c, h, w) = x.dims4();
    if c != spec.channels || h != PATCH_SIZE || w != PATCH_SIZE {
        return Err(Error::Shape(format!(
            "discriminator expects [n, {}, 25, 25], got {:?}",
            spec.channels,
            x.shape()
        )));
    }
    let mut inputs = Vec::with_capacity(4);
    let mut activated = Vec::with_capacity(4);
    let mut cur = x.clone();
    for i in 1..=4 {
        let mut y = nn::conv2d_forward(&cur, params.get(&format!("conv{i}.weight")), params.get(&format!("conv{i}.bias")), GEOM);
        nn::relu_inplace(y.data_mut());
        inputs.push(std::mem::replace(&mut cur, y.clone()));
        activated.push(y);
    }
    let width = cur.len() / n;
    let flat = cur.reshape(&[n, width])?;
    let logits = nn::dense_forward(&flat, params.get("fc.weight"), params.get("fc.bias"));
    let mut scores = logits.clone();
    nn::sigmoid_inplace(scores.data_mut());
    Ok(DiscriminatorTrace {
        inputs,
        activated,
        flat,
        logits,
        scores,
    })
}

/// Probability that each patch is real, `[n]`.
pub fn discriminator_forward(spec: &DiscriminatorSpec, params: &ModelParams, x: &Tensor) -> Result<Vec<f64>> {
    params.check_layout(&spec.layout())?;
    Ok(forward_trace(spec, params, x)?.scores.into_data())
}

/// Parameter gradients and input gradient given `d loss / d logits` (`[n, 1]`).
pub fn backward(
    params: &ModelParams,
    trace: &DiscriminatorTrace,
    grad_logits: &Tensor,
    need_input_grad: bool,
) -> (Grads, Option<Tensor>) {
    let mut grads = Grads::new();
    let (gflat, gw, gb) = nn::dense_backward(&trace.flat, params.get("fc.weight"), grad_logits, true);
    grads.insert("fc.weight".into(), gw);
    grads.insert("fc.bias".into(), gb);
    let mut g = gflat
        .expect("input grad requested")
        .reshape(trace.activated[3].shape())
        .expect("same element count");
    for i in (1..=4).rev() {
        nn::relu_backward_inplace(g.data_mut(), trace.activated[i - 1].data());
        let need = i > 1 || need_input_grad;
        let (gx, gw, gb) = nn::conv2d_backward(&trace.inputs[i - 1], params.get(&format!("conv{i}.weight")), &g, GEOM, need);
        grads.insert(format!("conv{i}.weight"), gw);
        grads.insert(format!("conv{i}.bias"), gb);
        match gx {
            Some(gx) => g = gx,
            None => return (grads, None),
        }
    }
    (grads, Some(g))
}
