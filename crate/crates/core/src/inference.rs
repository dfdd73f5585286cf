//! Whole-raster scoring with abutting sliding windows.
//!
//! A window of `H x W` pixels yields valid scores only for its central
//! `(H-24) x (W-24)` block, so windows advance by exactly that stride and
//! each pixel is scored by one window. The raster's outer 12-pixel ring
//! and masked pixels carry a NaN sentinel.

use std::path::Path;

use crate::data::io::{decode_native, encode_native};
use crate::data::patch::{PATCH_HALF, PATCH_SIZE};
use crate::data::raster::Raster;
use crate::error::{Error, Result};
use crate::models::detector::{score_region, DetectorSpec, Region};
use crate::models::ModelParams;

pub const DEFAULT_WINDOW: usize = 600;

/// Per-pixel scores of one raster; NaN marks unevaluable pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    pub id: String,
    pub height: usize,
    pub width: usize,
    pub scores: Vec<f32>,
}

impl ScoreMap {
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Option<f32> {
        let v = self.scores[row * self.width + col];
        (!v.is_nan()).then_some(v)
    }

    pub fn evaluable_count(&self) -> usize {
        self.scores.iter().filter(|v| !v.is_nan()).count()
    }

    pub fn to_raster(&self) -> Raster {
        Raster::new(self.id.clone(), 1, self.height, self.width, self.scores.clone()).expect("consistent dimensions")
    }

    pub fn from_raster(raster: Raster) -> Result<Self> {
        if raster.channels != 1 {
            return Err(Error::Format(format!(
                "a score map has one channel, {} has {}",
                raster.id, raster.channels
            )));
        }
        Ok(ScoreMap {
            id: raster.id,
            height: raster.height,
            width: raster.width,
            scores: raster.values,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, encode_native(&self.to_raster())).map_err(|e| Error::io(path, e))
    }

    pub fn load(id: &str, path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_raster(decode_native(id, &bytes)?)
    }
}

/// One window position along an axis and the output span it owns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub origin: usize,
    pub start: usize,
    pub end: usize,
}

/// The windows that cover a raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TilingPlan {
    pub window: (usize, usize),
    pub stride: (usize, usize),
    pub rows: Vec<Span>,
    pub cols: Vec<Span>,
}

impl TilingPlan {
    pub fn window_count(&self) -> usize {
        self.rows.len() * self.cols.len()
    }
}

fn axis_spans(len: usize, window: usize) -> Vec<Span> {
    let stride = window - 2 * PATCH_HALF;
    let last = len - PATCH_HALF;
    let mut spans = Vec::new();
    let mut covered = PATCH_HALF;
    let mut origin = 0;
    while covered < last {
        // The final window is pulled back inside the raster; it only owns
        // the pixels no earlier window scored.
        let o = origin.min(len - window);
        let end = o + window - PATCH_HALF;
        spans.push(Span {
            origin: o,
            start: covered,
            end,
        });
        covered = end;
        origin += stride;
    }
    spans
}

/// Window layout for an `h x w` raster. Windows larger than the raster
/// shrink to it; a raster below 25 pixels on a side cannot be scored.
pub fn tiling_plan(height: usize, width: usize, window: (usize, usize)) -> Result<TilingPlan> {
    if height < PATCH_SIZE || width < PATCH_SIZE {
        return Err(Error::WindowTooSmall { height, width });
    }
    if window.0 < PATCH_SIZE || window.1 < PATCH_SIZE {
        return Err(Error::WindowTooSmall {
            height: window.0,
            width: window.1,
        });
    }
    let wh = window.0.min(height);
    let ww = window.1.min(width);
    Ok(TilingPlan {
        window: (wh, ww),
        stride: (wh - 2 * PATCH_HALF, ww - 2 * PATCH_HALF),
        rows: axis_spans(height, wh),
        cols: axis_spans(width, ww),
    })
}

/// Score every evaluable pixel of `raster` (already normalized).
pub fn sliding_window_infer(
    raster: &Raster,
    spec: &DetectorSpec,
    params: &ModelParams,
    window: (usize, usize),
) -> Result<ScoreMap> {
    if raster.channels != spec.in_channels {
        return Err(Error::Shape(format!(
            "detector expects {} channels, raster {} has {}",
            spec.in_channels, raster.id, raster.channels
        )));
    }
    params.check_layout(&crate::models::Architecture::layout(spec))?;
    let plan = tiling_plan(raster.height, raster.width, window)?;
    log::info!(
        "tiling {}: window {}x{}, stride {}x{}, {} windows",
        raster.id,
        plan.window.0,
        plan.window.1,
        plan.stride.0,
        plan.stride.1,
        plan.window_count()
    );
    let (h, w) = (raster.height, raster.width);
    let mut scores = vec![f32::NAN; h * w];
    let (wh, ww) = plan.window;
    for rs in &plan.rows {
        for cs in &plan.cols {
            let tile = raster.window_f64(rs.origin, cs.origin, wh, ww);
            let region = Region::new(rs.start - rs.origin, cs.start - cs.origin, rs.end - rs.start, cs.end - cs.start);
            let map = score_region(spec, params, &tile, wh, ww, region);
            for i in 0..region.rows {
                let r = rs.start + i;
                for j in 0..region.cols {
                    let c = cs.start + j;
                    if raster.is_evaluable(r, c) {
                        scores[r * w + c] = map.data()[i * region.cols + j] as f32;
                    }
                }
            }
        }
    }
    Ok(ScoreMap {
        id: raster.id.clone(),
        height: h,
        width: w,
        scores,
    })
}

/// Evaluable pixels scoring at least `threshold`, in row-major order.
pub fn threshold_detections(map: &ScoreMap, threshold: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for r in 0..map.height {
        for c in 0..map.width {
            if let Some(s) = map.get(r, c) {
                if s as f64 >= threshold {
                    out.push((r, c));
                }
            }
        }
    }
    out
}
