//! The 9-layer fully convolutional detector.
//!
//! Layer 1 is a multi-scale filter bank of `k x k` convolutions for
//! `k in {1, 5, 9, 13}`. In train mode each branch convolves the centered
//! `(2k-1) x (2k-1)` sub-patch of a 25x25 input and max-pools the `k x k`
//! response to a single value, so every pooled response covers the patch
//! center. In test mode the same filters are applied with same-size zero
//! padding to a tile of any size and followed by a `k x k` stride-1 max-pool.
//! Both modes give identical per-pixel scores because the test-mode pooling
//! window at a pixel is exactly the set of train-mode conv positions.
//!
//! Layers 2..=8 are 1x1 convolutions (dense per pixel) with ReLU; layers in
//! `residual_layers` add an identity skip and layers in `dropout_layers`
//! apply inverted dropout during training. Layer 9 maps to `output_units`
//! sigmoid outputs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{Architecture, Grads, InitSpec, ModelParams, ParamSlot};
use crate::error::{Error, Result};
use crate::nn::{self, ConvGeom};
use crate::tensor::Tensor;

/// Side length of a training patch and of the receptive field.
pub const PATCH_SIZE: usize = 25;
/// Distance from a patch center to its border.
pub const PATCH_HALF: usize = 12;

pub const SUPPORTED_FILTER_SIZES: [usize; 4] = [1, 5, 9, 13];

const STD_DEFAULT: f64 = 0.01;
const STD_RESIDUAL: f64 = 0.005;
const REFERENCE_BANK_WIDTH: usize = 100;
const REFERENCE_TRUNK_WIDTH: usize = 200;

/// Output positions per GEMM when scoring tiles; bounds the im2col buffer.
const TILE_CHUNK: usize = 2048;
/// Output rows per strip when scoring tiles.
const TILE_STRIP: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    pub in_channels: usize,
    pub bank_filter_sizes: Vec<usize>,
    /// Output channels of each bank branch.
    pub bank_width: usize,
    /// Widths of layers 2 through 8.
    pub trunk_widths: Vec<usize>,
    pub residual_layers: Vec<usize>,
    pub dropout_layers: Vec<usize>,
    pub dropout_rate: f64,
    pub output_units: usize,
    #[serde(default)]
    pub init: InitScheme,
}

/// How dense-layer weight deviations are chosen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitScheme {
    /// 0.01 everywhere, 0.005 in residual layers.
    #[default]
    Fixed,
    /// The fixed deviations rescaled by `sqrt(reference fan-in / fan-in)`,
    /// where the reference is the 100/200-wide network. Narrow networks then
    /// keep the per-layer gain of the full-width one; at full width this
    /// equals `Fixed`.
    WidthMatched,
    /// `sqrt(2 / fan-in)` for every weight, bank filters included.
    He,
}

impl DetectorSpec {
    pub fn new(in_channels: usize) -> Self {
        DetectorSpec {
            in_channels,
            bank_filter_sizes: SUPPORTED_FILTER_SIZES.to_vec(),
            bank_width: 100,
            trunk_widths: vec![200; 7],
            residual_layers: vec![3, 4, 5, 6],
            dropout_layers: vec![7, 8],
            dropout_rate: 0.5,
            output_units: 1,
            init: InitScheme::Fixed,
        }
    }

    /// Same topology with uniform, smaller widths.
    pub fn with_widths(mut self, bank_width: usize, trunk_width: usize) -> Self {
        self.bank_width = bank_width;
        self.trunk_widths = vec![trunk_width; 7];
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.bank_width == 0 || self.output_units == 0 {
            return Err(Error::Config("detector widths must be positive".into()));
        }
        for &k in &self.bank_filter_sizes {
            if !SUPPORTED_FILTER_SIZES.contains(&k) {
                return Err(Error::UnsupportedFilter(k));
            }
        }
        let mut sorted = self.bank_filter_sizes.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.bank_filter_sizes.len() || sorted.last() != Some(&13) {
            return Err(Error::Config(
                "bank filter sizes must be distinct and include 13 (25x25 receptive field)".into(),
            ));
        }
        if self.trunk_widths.len() != 7 || self.trunk_widths.contains(&0) {
            return Err(Error::Config("trunk_widths needs 7 positive entries (layers 2-8)".into()));
        }
        for &l in &self.residual_layers {
            if !(3..=8).contains(&l) {
                return Err(Error::Config(format!("residual layer {l} outside 3..=8")));
            }
            if self.width_of(l) != self.width_of(l - 1) {
                return Err(Error::Config(format!(
                    "residual layer {l} joins widths {} and {}",
                    self.width_of(l - 1),
                    self.width_of(l)
                )));
            }
        }
        for &l in &self.dropout_layers {
            if !(2..=8).contains(&l) {
                return Err(Error::Config(format!("dropout layer {l} outside 2..=8")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config("dropout rate must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Width of layer `l` (1 = concatenated bank, 9 = output).
    pub fn width_of(&self, layer: usize) -> usize {
        match layer {
            1 => self.bank_width * self.bank_filter_sizes.len(),
            2..=8 => self.trunk_widths[layer - 2],
            9 => self.output_units,
            _ => panic!("layer {layer} out of range"),
        }
    }

    pub fn feature_width(&self) -> usize {
        self.width_of(8)
    }
}

impl Architecture for DetectorSpec {
    fn layout(&self) -> Vec<ParamSlot> {
        let mut slots = Vec::new();
        for &k in &self.bank_filter_sizes {
            slots.push(ParamSlot::new(
                format!("bank{k}.weight"),
                &[self.bank_width, self.in_channels, k, k],
                match self.init {
                    InitScheme::He => InitSpec::gaussian((2.0 / (self.in_channels * k * k) as f64).sqrt()),
                    _ => InitSpec::gaussian(STD_DEFAULT),
                },
            ));
            slots.push(ParamSlot::new(format!("bank{k}.bias"), &[self.bank_width], InitSpec::ZERO));
        }
        for l in 2..=9 {
            let mut std = if self.residual_layers.contains(&l) { STD_RESIDUAL } else { STD_DEFAULT };
            if self.init == InitScheme::WidthMatched {
                let reference = if l == 2 { REFERENCE_BANK_WIDTH * self.bank_filter_sizes.len() } else { REFERENCE_TRUNK_WIDTH };
                std *= (reference as f64 / self.width_of(l - 1) as f64).sqrt();
            }
            if self.init == InitScheme::He {
                // Residual branches start at half gain, as in the fixed scheme.
                let gain = if self.residual_layers.contains(&l) { 0.5 } else { 1.0 };
                std = gain * (2.0 / self.width_of(l - 1) as f64).sqrt();
            }
            slots.push(ParamSlot::new(
                format!("layer{l}.weight"),
                &[self.width_of(l), self.width_of(l - 1)],
                InitSpec::gaussian(std),
            ));
            slots.push(ParamSlot::new(format!("layer{l}.bias"), &[self.width_of(l)], InitSpec::ZERO));
        }
        slots
    }
}

struct TrunkStep {
    input: Tensor,
    activated: Tensor,
    dropout_mask: Option<Vec<f64>>,
}

/// Activations kept from a train-mode forward pass.
pub struct DetectorTrace {
    branch_argmax: Vec<Vec<usize>>,
    bank: Tensor,
    trunk: Vec<TrunkStep>,
    layer8: Tensor,
    pub logits: Tensor,
    pub scores: Tensor,
}

impl DetectorTrace {
    /// Post-activation output of layer 8, `[n, width]`.
    pub fn layer8(&self) -> &Tensor {
        &self.layer8
    }
}

/// Half-open rectangle of output pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub row0: usize,
    pub col0: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Region {
    pub fn new(row0: usize, col0: usize, rows: usize, cols: usize) -> Self {
        Region { row0, col0, rows, cols }
    }

    /// The central region whose receptive fields lie entirely inside an `h x w` tile.
    pub fn valid(h: usize, w: usize) -> Self {
        Region::new(PATCH_HALF, PATCH_HALF, h.saturating_sub(2 * PATCH_HALF), w.saturating_sub(2 * PATCH_HALF))
    }
}

fn crop_center(x: &Tensor, k: usize) -> Tensor {
    let (n, c, h, w) = x.dims4();
    let side = 2 * k - 1;
    let off = PATCH_HALF + 1 - k;
    let mut out = Tensor::zeros(&[n, c, side, side]);
    for i in 0..n {
        let src = x.outer(i);
        let dst = out.outer_mut(i);
        for ch in 0..c {
            for r in 0..side {
                let s = (ch * h + off + r) * w + off;
                let d = (ch * side + r) * side;
                dst[d..d + side].copy_from_slice(&src[s..s + side]);
            }
        }
    }
    out
}

fn uncrop_add(grad_crop: &Tensor, k: usize, grad_x: &mut Tensor) {
    let (n, c, h, w) = grad_x.dims4();
    let side = 2 * k - 1;
    let off = PATCH_HALF + 1 - k;
    for i in 0..n {
        let src = grad_crop.outer(i);
        let dst = grad_x.outer_mut(i);
        for ch in 0..c {
            for r in 0..side {
                let d = (ch * h + off + r) * w + off;
                let s = (ch * side + r) * side;
                for (a, b) in dst[d..d + side].iter_mut().zip(&src[s..s + side]) {
                    *a += b;
                }
            }
        }
    }
}

fn check_params(spec: &DetectorSpec, params: &ModelParams) -> Result<()> {
    params.check_layout(&spec.layout())
}

/// Train-mode forward over `[n, c, 25, 25]` patches.
///
/// Dropout is applied only when `dropout_rng` is given.
pub fn forward_train<R: Rng + ?Sized>(
    spec: &DetectorSpec,
    params: &ModelParams,
    x: &Tensor,
    mut dropout_rng: Option<&mut R>,
) -> Result<DetectorTrace> {
    if x.shape().len() != 4 {
        return Err(Error::Shape(format!("detector input must be NCHW, got {:?}", x.shape())));
    }
    let (n, c, h, w) = x.dims4();
    if h != PATCH_SIZE || w != PATCH_SIZE {
        return Err(Error::Shape(format!("train mode needs 25x25 patches, got {h}x{w}")));
    }
    if c != spec.in_channels {
        return Err(Error::Shape(format!("detector expects {} channels, got {c}", spec.in_channels)));
    }
    let bw = spec.bank_width;
    let nb = spec.bank_filter_sizes.len();
    let feat = nb * bw;
    let mut bank = Tensor::zeros(&[n, feat]);
    let mut branch_argmax = Vec::with_capacity(nb);
    for (bi, &k) in spec.bank_filter_sizes.iter().enumerate() {
        let crop = crop_center(x, k);
        let map = nn::conv2d_forward(
            &crop,
            params.get(&format!("bank{k}.weight")),
            params.get(&format!("bank{k}.bias")),
            ConvGeom::new(k, 1, 0),
        );
        let kk = k * k;
        let mut argmax = vec![0usize; n * bw];
        for i in 0..n {
            let m = map.outer(i);
            for b in 0..bw {
                let cell = &m[b * kk..(b + 1) * kk];
                let mut best = 0;
                for (j, v) in cell.iter().enumerate() {
                    if *v > cell[best] {
                        best = j;
                    }
                }
                argmax[i * bw + b] = best;
                bank.data_mut()[i * feat + bi * bw + b] = cell[best];
            }
        }
        branch_argmax.push(argmax);
    }
    nn::relu_inplace(bank.data_mut());

    let mut trunk = Vec::with_capacity(7);
    let mut h = bank.clone();
    for l in 2..=8 {
        let z = nn::dense_forward(&h, params.get(&format!("layer{l}.weight")), params.get(&format!("layer{l}.bias")));
        let mut activated = z;
        nn::relu_inplace(activated.data_mut());
        let mut out = activated.clone();
        if spec.residual_layers.contains(&l) {
            out.add_assign(&h);
        }
        let mut dropout_mask = None;
        if spec.dropout_layers.contains(&l) && spec.dropout_rate > 0.0 {
            if let Some(rng) = dropout_rng.as_deref_mut() {
                let keep = 1.0 - spec.dropout_rate;
                let mask: Vec<f64> = (0..out.len())
                    .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect();
                out.data_mut().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                dropout_mask = Some(mask);
            }
        }
        trunk.push(TrunkStep {
            input: std::mem::replace(&mut h, out),
            activated,
            dropout_mask,
        });
    }
    let logits = nn::dense_forward(&h, params.get("layer9.weight"), params.get("layer9.bias"));
    let mut scores = logits.clone();
    nn::sigmoid_inplace(scores.data_mut());
    Ok(DetectorTrace {
        branch_argmax,
        bank,
        trunk,
        layer8: h,
        logits,
        scores,
    })
}

/// Backward through a train-mode trace given `d loss / d logits`.
///
/// Returns parameter gradients and, when requested, the gradient with
/// respect to the input patches.
pub fn backward_train(
    spec: &DetectorSpec,
    params: &ModelParams,
    x: &Tensor,
    trace: &DetectorTrace,
    grad_logits: &Tensor,
    need_input_grad: bool,
) -> (Grads, Option<Tensor>) {
    let mut grads = Grads::new();
    let (gh, gw, gb) = nn::dense_backward(&trace.layer8, params.get("layer9.weight"), grad_logits, true);
    grads.insert("layer9.weight".into(), gw);
    grads.insert("layer9.bias".into(), gb);
    let mut g = gh.expect("input grad requested");
    for (idx, step) in trace.trunk.iter().enumerate().rev() {
        let l = idx + 2;
        if let Some(mask) = &step.dropout_mask {
            g.data_mut().iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
        }
        let mut ga = g.clone();
        nn::relu_backward_inplace(ga.data_mut(), step.activated.data());
        let (gin, gw, gb) = nn::dense_backward(&step.input, params.get(&format!("layer{l}.weight")), &ga, true);
        grads.insert(format!("layer{l}.weight"), gw);
        grads.insert(format!("layer{l}.bias"), gb);
        let mut gin = gin.expect("input grad requested");
        if spec.residual_layers.contains(&l) {
            gin.add_assign(&g);
        }
        g = gin;
    }
    nn::relu_backward_inplace(g.data_mut(), trace.bank.data());

    let n = x.dims4().0;
    let bw = spec.bank_width;
    let feat = g.dims2().1;
    let mut grad_x = need_input_grad.then(|| Tensor::zeros(x.shape()));
    for (bi, &k) in spec.bank_filter_sizes.iter().enumerate() {
        let kk = k * k;
        let mut gmap = Tensor::zeros(&[n, bw, k, k]);
        for i in 0..n {
            let dst = gmap.outer_mut(i);
            for b in 0..bw {
                dst[b * kk + trace.branch_argmax[bi][i * bw + b]] = g.data()[i * feat + bi * bw + b];
            }
        }
        let crop = crop_center(x, k);
        let (gcrop, gw, gb) = nn::conv2d_backward(
            &crop,
            params.get(&format!("bank{k}.weight")),
            &gmap,
            ConvGeom::new(k, 1, 0),
            need_input_grad,
        );
        grads.insert(format!("bank{k}.weight"), gw);
        grads.insert(format!("bank{k}.bias"), gb);
        if let (Some(gx), Some(gc)) = (grad_x.as_mut(), gcrop) {
            uncrop_add(&gc, k, gx);
        }
    }
    (grads, grad_x)
}

/// Test-mode scores for the pixels of `region` within one `[c, h, w]` tile.
///
/// Pixels outside the tile read as zero, so only pixels at least 12 pixels
/// from the tile border have scores equal to their train-mode counterparts.
/// Returns `[output_units, region.rows, region.cols]`.
pub fn score_region(
    spec: &DetectorSpec,
    params: &ModelParams,
    tile: &[f64],
    h: usize,
    w: usize,
    region: Region,
) -> Tensor {
    let c = spec.in_channels;
    assert_eq!(tile.len(), c * h * w, "tile size does not match {c}x{h}x{w}");
    assert!(region.row0 + region.rows <= h && region.col0 + region.cols <= w, "region outside tile");
    let outs = spec.output_units;
    let mut scores = Tensor::zeros(&[outs, region.rows, region.cols]);
    let mut s0 = region.row0;
    let r_end = region.row0 + region.rows;
    while s0 < r_end {
        let s1 = (s0 + TILE_STRIP).min(r_end);
        let strip = Region::new(s0, region.col0, s1 - s0, region.cols);
        let feats = bank_features_dense(spec, params, tile, h, w, strip);
        let logits = trunk_dense(spec, params, feats).0;
        let npix = strip.rows * strip.cols;
        for p in 0..npix {
            let (ry, rx) = (p / strip.cols, p % strip.cols);
            let oy = s0 - region.row0 + ry;
            for o in 0..outs {
                scores.data_mut()[(o * region.rows + oy) * region.cols + rx] = nn::sigmoid(logits.data()[p * outs + o]);
            }
        }
        s0 = s1;
    }
    scores
}

/// Layer-8 features for each pixel of `region`, `[rows*cols, width]`.
pub fn features_region(
    spec: &DetectorSpec,
    params: &ModelParams,
    tile: &[f64],
    h: usize,
    w: usize,
    region: Region,
) -> Tensor {
    let feats = bank_features_dense(spec, params, tile, h, w, region);
    trunk_dense(spec, params, feats).1
}

fn trunk_dense(spec: &DetectorSpec, params: &ModelParams, mut h: Tensor) -> (Tensor, Tensor) {
    for l in 2..=8 {
        let mut a = nn::dense_forward(&h, params.get(&format!("layer{l}.weight")), params.get(&format!("layer{l}.bias")));
        nn::relu_inplace(a.data_mut());
        if spec.residual_layers.contains(&l) {
            a.add_assign(&h);
        }
        h = a;
    }
    let logits = nn::dense_forward(&h, params.get("layer9.weight"), params.get("layer9.bias"));
    (logits, h)
}

/// Post-ReLU bank output for every pixel of `region`, `[rows*cols, features]`.
fn bank_features_dense(
    spec: &DetectorSpec,
    params: &ModelParams,
    tile: &[f64],
    h: usize,
    w: usize,
    region: Region,
) -> Tensor {
    let c = spec.in_channels;
    let bw = spec.bank_width;
    let feat = bw * spec.bank_filter_sizes.len();
    let npix = region.rows * region.cols;
    let mut out = Tensor::zeros(&[npix, feat]);
    for (bi, &k) in spec.bank_filter_sizes.iter().enumerate() {
        let p = (k - 1) / 2;
        let weight = params.get(&format!("bank{k}.weight"));
        let bias = params.get(&format!("bank{k}.bias"));
        // Conv responses are needed wherever a pooling window can reach.
        let ys0 = region.row0.saturating_sub(p);
        let ys1 = (region.row0 + region.rows + p).min(h);
        let xs0 = region.col0.saturating_sub(p);
        let xs1 = (region.col0 + region.cols + p).min(w);
        let (ch_rows, ch_cols) = (ys1 - ys0, xs1 - xs0);
        let npos = ch_rows * ch_cols;
        let depth = c * k * k;
        let mut conv = vec![0.0; bw * npos];
        let mut cols = vec![0.0; depth * TILE_CHUNK.min(npos)];
        let mut chunk_out = vec![0.0; bw * TILE_CHUNK.min(npos)];
        let mut start = 0;
        while start < npos {
            let len = TILE_CHUNK.min(npos - start);
            for ch in 0..c {
                let plane = &tile[ch * h * w..(ch + 1) * h * w];
                for ky in 0..k {
                    for kx in 0..k {
                        let row = (ch * k + ky) * k + kx;
                        let dst = &mut cols[row * len..(row + 1) * len];
                        let mut j = 0;
                        while j < len {
                            let pos = start + j;
                            let (py, px) = (pos / ch_cols, pos % ch_cols);
                            let seg = (ch_cols - px).min(len - j);
                            let out = &mut dst[j..j + seg];
                            let y = (ys0 + py + ky) as isize - p as isize;
                            if y < 0 || y >= h as isize {
                                out.fill(0.0);
                            } else {
                                let line = &plane[y as usize * w..(y as usize + 1) * w];
                                let x0 = (xs0 + px + kx) as isize - p as isize;
                                for (i, v) in out.iter_mut().enumerate() {
                                    let x = x0 + i as isize;
                                    *v = if x < 0 || x >= w as isize { 0.0 } else { line[x as usize] };
                                }
                            }
                            j += seg;
                        }
                    }
                }
            }
            for b in 0..bw {
                chunk_out[b * len..(b + 1) * len].iter_mut().for_each(|v| *v = bias.data()[b]);
            }
            nn::gemm(false, false, bw, len, depth, 1.0, weight.data(), &cols[..depth * len], 1.0, &mut chunk_out[..bw * len]);
            for b in 0..bw {
                conv[b * npos + start..b * npos + start + len].copy_from_slice(&chunk_out[b * len..(b + 1) * len]);
            }
            start += len;
        }
        // Separable k x k max-pool, stride 1; positions outside the tile are ignored.
        let mut hmax = vec![0.0; ch_rows * region.cols];
        for b in 0..bw {
            let plane = &conv[b * npos..(b + 1) * npos];
            for yy in 0..ch_rows {
                for rx in 0..region.cols {
                    let x = region.col0 + rx;
                    let lo = x.saturating_sub(p).max(xs0) - xs0;
                    let hi = (x + p + 1).min(xs1) - xs0;
                    let line = &plane[yy * ch_cols..(yy + 1) * ch_cols];
                    hmax[yy * region.cols + rx] = line[lo..hi].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                }
            }
            for ry in 0..region.rows {
                let y = region.row0 + ry;
                let lo = y.saturating_sub(p).max(ys0) - ys0;
                let hi = (y + p + 1).min(ys1) - ys0;
                for rx in 0..region.cols {
                    let mut m = f64::NEG_INFINITY;
                    for yy in lo..hi {
                        m = m.max(hmax[yy * region.cols + rx]);
                    }
                    out.data_mut()[(ry * region.cols + rx) * feat + bi * bw + b] = m;
                }
            }
        }
    }
    nn::relu_inplace(out.data_mut());
    out
}

/// Score patches or tiles.
///
/// Train mode takes `[n, c, 25, 25]` and returns `[n, output_units]`; test
/// mode takes `[n, c, h, w]` with `h, w >= 25` and returns the raw
/// `[n, output_units, h, w]` map, of which the central `(h-24) x (w-24)`
/// block is valid. Dropout is active only in train mode with a seed.
pub fn detector_forward(
    spec: &DetectorSpec,
    params: &ModelParams,
    input: &Tensor,
    mode: Mode,
    dropout_seed: Option<u64>,
) -> Result<Tensor> {
    spec.validate()?;
    check_params(spec, params)?;
    match mode {
        Mode::Train => {
            use rand::SeedableRng;
            let mut rng = dropout_seed.map(rand_chacha::ChaCha8Rng::seed_from_u64);
            Ok(forward_train(spec, params, input, rng.as_mut())?.scores)
        }
        Mode::Test => {
            if input.shape().len() != 4 {
                return Err(Error::Shape(format!("detector input must be NCHW, got {:?}", input.shape())));
            }
            let (n, c, h, w) = input.dims4();
            if c != spec.in_channels {
                return Err(Error::Shape(format!("detector expects {} channels, got {c}", spec.in_channels)));
            }
            if h < PATCH_SIZE || w < PATCH_SIZE {
                return Err(Error::Shape(format!("test mode needs at least 25x25 input, got {h}x{w}")));
            }
            let mut maps = Vec::with_capacity(n);
            for i in 0..n {
                maps.push(score_region(spec, params, input.outer(i), h, w, Region::new(0, 0, h, w)));
            }
            Tensor::stack(&maps)
        }
    }
}
