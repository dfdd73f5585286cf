use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A `C x H x W` band-sequential image with an optional evaluability mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub id: String,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Band-sequential values: `values[(c * height + row) * width + col]`.
    pub values: Vec<f32>,
    /// `true` marks an evaluable pixel.
    pub mask: Option<Vec<bool>>,
}

impl Raster {
    pub fn new(id: impl Into<String>, channels: usize, height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Integrity(format!(
                "raster dimensions must be positive, got {channels}x{height}x{width}"
            )));
        }
        if values.len() != channels * height * width {
            return Err(Error::Integrity(format!(
                "{channels}x{height}x{width} raster needs {} values, got {}",
                channels * height * width,
                values.len()
            )));
        }
        Ok(Raster {
            id: id.into(),
            channels,
            height,
            width,
            values,
            mask: None,
        })
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.height * self.width {
            return Err(Error::Integrity(format!(
                "mask has {} entries for a {}x{} raster",
                mask.len(),
                self.height,
                self.width
            )));
        }
        self.mask = Some(mask);
        Ok(self)
    }

    #[inline]
    pub fn get(&self, channel: usize, row: usize, col: usize) -> f32 {
        self.values[(channel * self.height + row) * self.width + col]
    }

    #[inline]
    pub fn is_evaluable(&self, row: usize, col: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m[row * self.width + col])
    }

    pub fn evaluable_count(&self) -> usize {
        self.mask
            .as_ref()
            .map_or(self.height * self.width, |m| m.iter().filter(|&&v| v).count())
    }

    pub fn band(&self, channel: usize) -> &[f32] {
        let plane = self.height * self.width;
        &self.values[channel * plane..(channel + 1) * plane]
    }

    /// Copy of the `h x w` window at `(row, col)` as `f64`, band-sequential.
    pub fn window_f64(&self, row: usize, col: usize, h: usize, w: usize) -> Vec<f64> {
        assert!(row + h <= self.height && col + w <= self.width, "window outside raster");
        let mut out = Vec::with_capacity(self.channels * h * w);
        for c in 0..self.channels {
            for r in row..row + h {
                let start = (c * self.height + r) * self.width + col;
                out.extend(self.values[start..start + w].iter().map(|&v| v as f64));
            }
        }
        out
    }

    /// Summed-area table over the mask: `(h+1) x (w+1)` counts of evaluable pixels.
    pub fn mask_integral(&self) -> Vec<u32> {
        let (h, w) = (self.height, self.width);
        let mut sat = vec![0u32; (h + 1) * (w + 1)];
        for r in 0..h {
            let mut run = 0u32;
            for c in 0..w {
                run += self.is_evaluable(r, c) as u32;
                sat[(r + 1) * (w + 1) + c + 1] = sat[r * (w + 1) + c + 1] + run;
            }
        }
        sat
    }
}

/// Whether the `h x w` window at `(row, col)` is entirely evaluable.
pub fn window_fully_masked(sat: &[u32], width: usize, row: usize, col: usize, h: usize, w: usize) -> bool {
    let stride = width + 1;
    let total = sat[(row + h) * stride + col + w] + sat[row * stride + col]
        - sat[row * stride + col + w]
        - sat[(row + h) * stride + col];
    total as usize == h * w
}

/// Per-channel mean and standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    /// Statistics over the evaluable pixels of the given (training) rasters.
    pub fn from_rasters<'a>(rasters: impl IntoIterator<Item = &'a Raster>) -> Result<Self> {
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        let mut count = 0usize;
        for r in rasters {
            if sum.is_empty() {
                sum = vec![0.0; r.channels];
                sq = vec![0.0; r.channels];
            } else if sum.len() != r.channels {
                return Err(Error::Integrity(format!(
                    "raster {} has {} channels, expected {}",
                    r.id,
                    r.channels,
                    sum.len()
                )));
            }
            for row in 0..r.height {
                for col in 0..r.width {
                    if !r.is_evaluable(row, col) {
                        continue;
                    }
                    count += 1;
                    for c in 0..r.channels {
                        let v = r.get(c, row, col) as f64;
                        sum[c] += v;
                        sq[c] += v * v;
                    }
                }
            }
        }
        if count == 0 {
            return Err(Error::Integrity("no evaluable pixels to compute statistics".into()));
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| (s / n - m * m).max(0.0).sqrt())
            .collect();
        Ok(ChannelStats { mean, std })
    }
}

/// Per-channel z-score. The mask is carried over unchanged.
pub fn normalize(raster: &Raster, stats: &ChannelStats) -> Result<Raster> {
    if stats.mean.len() != raster.channels || stats.std.len() != raster.channels {
        return Err(Error::Integrity(format!(
            "stats cover {} channels, raster {} has {}",
            stats.mean.len(),
            raster.id,
            raster.channels
        )));
    }
    if let Some(channel) = stats.std.iter().position(|&s| !(s > 1e-12) || !s.is_finite()) {
        return Err(Error::DegenerateChannel { channel });
    }
    let plane = raster.height * raster.width;
    let mut values = Vec::with_capacity(raster.values.len());
    for c in 0..raster.channels {
        let (m, s) = (stats.mean[c], stats.std[c]);
        values.extend(raster.values[c * plane..(c + 1) * plane].iter().map(|&v| ((v as f64 - m) / s) as f32));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Integrity(format!("raster {} has non-finite values after normalization", raster.id)));
    }
    Ok(Raster { values, ..raster.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_std_channel_is_degenerate() {
        let r = Raster::new("z", 2, 2, 2, vec![0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let stats = ChannelStats::from_rasters([&r]).unwrap();
        assert!(matches!(normalize(&r, &stats), Err(Error::DegenerateChannel { channel: 0 })));
    }

    #[test]
    fn standardized_channel_is_unchanged() {
        let r = Raster::new("s", 1, 1, 4, vec![-1.0, 1.0, -1.0, 1.0]).unwrap();
        let stats = ChannelStats::from_rasters([&r]).unwrap();
        let n = normalize(&r, &stats).unwrap();
        for (a, b) in n.values.iter().zip(&r.values) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn masked_pixels_do_not_enter_statistics() {
        let r = Raster::new("m", 1, 1, 3, vec![1.0, 3.0, 1000.0])
            .unwrap()
            .with_mask(vec![true, true, false])
            .unwrap();
        let s = ChannelStats::from_rasters([&r]).unwrap();
        assert!((s.mean[0] - 2.0).abs() < 1e-12);
        assert!((s.std[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mask_must_match_dimensions() {
        let r = Raster::new("m", 1, 2, 2, vec![0.0; 4]).unwrap();
        assert!(r.with_mask(vec![true; 3]).is_err());
    }

    #[test]
    fn integral_window_test() {
        let mut mask = vec![true; 16];
        mask[5] = false; // (1, 1)
        let r = Raster::new("m", 1, 4, 4, vec![0.0; 16]).unwrap().with_mask(mask).unwrap();
        let sat = r.mask_integral();
        assert!(!window_fully_masked(&sat, 4, 0, 0, 2, 2));
        assert!(window_fully_masked(&sat, 4, 2, 2, 2, 2));
        assert!(window_fully_masked(&sat, 4, 0, 2, 4, 2));
    }
}
