//! Hard negative generator: 8 convolutions and 2 transposed convolutions.
//!
//! ```text
//! enc1 3x3      C  -> g    25x25
//! enc2 3x3      g  -> g    25x25 ----------------------------.
//! enc3 3x3 s2   g  -> 2g   13x13                             |
//! enc4 3x3      2g -> 2g   13x13 -------------.              |
//! enc5 3x3 s2   2g -> 4g   7x7                |              |
//! enc6 3x3      4g -> 4g   7x7                |              |
//! dec1 3x3 s2^T 4g -> 2g   13x13 -- concat <--'              |
//! conv7 3x3     4g -> 2g   13x13                             |
//! dec2 3x3 s2^T 2g -> g    25x25 -- concat <-----------------'
//! conv8 3x3     2g -> C    25x25   (linear output)
//! ```

use serde::{Deserialize, Serialize};

use super::detector::{InitScheme, PATCH_SIZE};
use super::params::{Architecture, Grads, InitSpec, ModelParams, ParamSlot};
use crate::error::{Error, Result};
use crate::nn::{self, ConvGeom};
use crate::tensor::Tensor;

const STD_HIDDEN: f64 = 0.02;
/// Default deviation of the output layer.
pub const STD_LAST: f64 = 50.0;

fn default_output_std() -> f64 {
    STD_LAST
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub channels: usize,
    /// Width of the first encoder stage; deeper stages use 2x and 4x.
    pub base_width: usize,
    /// Initial weight deviation of the output layer.
    #[serde(default = "default_output_std")]
    pub output_std: f64,
    /// Hidden-layer scheme; `He` replaces the fixed deviation with
    /// `sqrt(2 / fan_in)`.
    #[serde(default)]
    pub init: InitScheme,
}

impl GeneratorSpec {
    pub fn new(channels: usize) -> Self {
        GeneratorSpec {
            channels,
            base_width: 16,
            output_std: STD_LAST,
            init: InitScheme::Fixed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.base_width == 0 {
            return Err(Error::Config("generator widths must be positive".into()));
        }
        if !(self.output_std.is_finite() && self.output_std > 0.0) {
            return Err(Error::Config("generator output_std must be positive".into()));
        }
        if self.init == InitScheme::WidthMatched {
            return Err(Error::Config("width-matched init applies to the detector only".into()));
        }
        Ok(())
    }

    fn convs(&self) -> Vec<(&'static str, usize, usize, ConvGeom)> {
        let (c, g) = (self.channels, self.base_width);
        let same = ConvGeom::new(3, 1, 1);
        let down = ConvGeom::new(3, 2, 1);
        vec![
            ("enc1", c, g, same),
            ("enc2", g, g, same),
            ("enc3", g, 2 * g, down),
            ("enc4", 2 * g, 2 * g, same),
            ("enc5", 2 * g, 4 * g, down),
            ("enc6", 4 * g, 4 * g, same),
            ("dec1", 4 * g, 2 * g, down),
            ("conv7", 4 * g, 2 * g, same),
            ("dec2", 2 * g, g, down),
            ("conv8", 2 * g, c, same),
        ]
    }
}

impl Architecture for GeneratorSpec {
    fn layout(&self) -> Vec<ParamSlot> {
        let mut slots = Vec::new();
        for (name, cin, cout, geom) in self.convs() {
            let std = match (name, self.init) {
                ("conv8", _) => self.output_std,
                (_, InitScheme::He) => (2.0 / (cin * geom.kernel * geom.kernel) as f64).sqrt(),
                _ => STD_HIDDEN,
            };
            let shape = if name.starts_with("dec") {
                [cin, cout, geom.kernel, geom.kernel]
            } else {
                [cout, cin, geom.kernel, geom.kernel]
            };
            slots.push(ParamSlot::new(format!("{name}.weight"), &shape, InitSpec::gaussian(std)));
            slots.push(ParamSlot::new(format!("{name}.bias"), &[cout], InitSpec::ZERO));
        }
        slots
    }
}

/// Activations kept for backward, in forward order.
pub struct GeneratorTrace {
    /// Input of every layer, keyed like the parameter prefix.
    inputs: Vec<(&'static str, Tensor)>,
    /// Post-ReLU output of every hidden layer.
    activated: Vec<(&'static str, Tensor)>,
    pub output: Tensor,
}

fn layer(params: &ModelParams, name: &str, x: &Tensor, geom: ConvGeom) -> Tensor {
    let w = params.get(&format!("{name}.weight"));
    let b = params.get(&format!("{name}.bias"));
    if name.starts_with("dec") {
        nn::conv_transpose2d_forward(x, w, b, geom)
    } else {
        nn::conv2d_forward(x, w, b, geom)
    }
}

fn check_input(spec: &GeneratorSpec, x: &Tensor) -> Result<()> {
    if x.shape().len() != 4 {
        return Err(Error::Shape(format!("generator input must be NCHW, got {:?}", x.shape())));
    }
    let (_, c, h, w) = x.dims4();
    if c != spec.channels || h != PATCH_SIZE || w != PATCH_SIZE {
        return Err(Error::Shape(format!(
            "generator expects [n, {}, 25, 25], got {:?}",
            spec.channels,
            x.shape()
        )));
    }
    Ok(())
}

pub fn forward_trace(spec: &GeneratorSpec, params: &ModelParams, x: &Tensor) -> Result<GeneratorTrace> {
    check_input(spec, x)?;
    let geoms: Vec<_> = spec.convs().into_iter().map(|(n, _, _, g)| (n, g)).collect();
    let mut inputs = Vec::with_capacity(10);
    let mut activated = Vec::with_capacity(9);
    let mut run = |name: &'static str, geom: ConvGeom, input: Tensor, relu: bool| {
        let mut y = layer(params, name, &input, geom);
        inputs.push((name, input));
        if relu {
            nn::relu_inplace(y.data_mut());
            activated.push((name, y.clone()));
        }
        y
    };
    let e1 = run(geoms[0].0, geoms[0].1, x.clone(), true);
    let e2 = run(geoms[1].0, geoms[1].1, e1, true);
    let e3 = run(geoms[2].0, geoms[2].1, e2.clone(), true);
    let e4 = run(geoms[3].0, geoms[3].1, e3, true);
    let e5 = run(geoms[4].0, geoms[4].1, e4.clone(), true);
    let e6 = run(geoms[5].0, geoms[5].1, e5, true);
    let d1 = run(geoms[6].0, geoms[6].1, e6, true);
    let c7 = run(geoms[7].0, geoms[7].1, nn::concat_channels(&d1, &e4), true);
    let d2 = run(geoms[8].0, geoms[8].1, c7, true);
    let output = run(geoms[9].0, geoms[9].1, nn::concat_channels(&d2, &e2), false);
    Ok(GeneratorTrace {
        inputs,
        activated,
        output,
    })
}

/// Generated patches with the same shape as the input negatives.
pub fn generator_forward(spec: &GeneratorSpec, params: &ModelParams, x: &Tensor) -> Result<Tensor> {
    params.check_layout(&spec.layout())?;
    Ok(forward_trace(spec, params, x)?.output)
}

/// Parameter gradients given `d loss / d output`.
pub fn backward(spec: &GeneratorSpec, params: &ModelParams, trace: &GeneratorTrace, grad_out: &Tensor) -> Grads {
    let geoms: Vec<_> = spec.convs();
    let g = spec.base_width;
    let mut grads = Grads::new();
    let input_of = |name: &str| &trace.inputs.iter().find(|(n, _)| *n == name).expect("traced").1;
    let act_of = |name: &str| &trace.activated.iter().find(|(n, _)| *n == name).expect("traced").1;
    let geom_of = |name: &str| geoms.iter().find(|(n, ..)| *n == name).expect("known layer").3;

    let mut step = |name: &'static str, mut grad: Tensor, relu: bool, need_input: bool| -> Option<Tensor> {
        if relu {
            nn::relu_backward_inplace(grad.data_mut(), act_of(name).data());
        }
        let w = params.get(&format!("{name}.weight"));
        let (gx, gw, gb) = if name.starts_with("dec") {
            nn::conv_transpose2d_backward(input_of(name), w, &grad, geom_of(name), need_input)
        } else {
            nn::conv2d_backward(input_of(name), w, &grad, geom_of(name), need_input)
        };
        grads.insert(format!("{name}.weight"), gw);
        grads.insert(format!("{name}.bias"), gb);
        gx
    };

    let g_cat8 = step("conv8", grad_out.clone(), false, true).expect("input grad");
    let (g_d2, mut g_e2) = nn::split_channels(&g_cat8, g);
    let g_c7 = step("dec2", g_d2, true, true).expect("input grad");
    let g_cat7 = step("conv7", g_c7, true, true).expect("input grad");
    let (g_d1, mut g_e4) = nn::split_channels(&g_cat7, 2 * g);
    let g_e6 = step("dec1", g_d1, true, true).expect("input grad");
    let g_e5 = step("enc6", g_e6, true, true).expect("input grad");
    g_e4.add_assign(&step("enc5", g_e5, true, true).expect("input grad"));
    let g_e3 = step("enc4", g_e4, true, true).expect("input grad");
    g_e2.add_assign(&step("enc3", g_e3, true, true).expect("input grad"));
    let g_e1 = step("enc2", g_e2, true, true).expect("input grad");
    step("enc1", g_e1, true, false);
    grads
}
