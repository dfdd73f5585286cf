use serde::{Deserialize, Serialize};

pub use crate::models::detector::{PATCH_HALF, PATCH_SIZE};

use super::raster::Raster;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Real,
    Generated,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PatchCenter {
    pub raster_id: String,
    pub row: usize,
    pub col: usize,
}

/// A `C x 25 x 25` training example.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub channels: usize,
    /// `values[(c * 25 + i) * 25 + j]`.
    pub values: Vec<f64>,
    pub label: usize,
    pub center: PatchCenter,
    pub provenance: Provenance,
}

impl Patch {
    pub fn get(&self, c: usize, i: usize, j: usize) -> f64 {
        self.values[(c * PATCH_SIZE + i) * PATCH_SIZE + j]
    }
}

/// Copy the 25x25 window centered at `(row, col)`; no padding is applied.
pub fn extract_patch(raster: &Raster, row: usize, col: usize) -> Result<Patch> {
    if row < PATCH_HALF || col < PATCH_HALF || row + PATCH_HALF >= raster.height || col + PATCH_HALF >= raster.width {
        return Err(Error::OutOfBounds {
            row,
            col,
            height: raster.height,
            width: raster.width,
        });
    }
    Ok(Patch {
        channels: raster.channels,
        values: raster.window_f64(row - PATCH_HALF, col - PATCH_HALF, PATCH_SIZE, PATCH_SIZE),
        label: 0,
        center: PatchCenter {
            raster_id: raster.id.clone(),
            row,
            col,
        },
        provenance: Provenance::Real,
    })
}

/// Write a patch back into a raster at its center.
pub fn embed_patch(raster: &mut Raster, patch: &Patch) -> Result<()> {
    let (row, col) = (patch.center.row, patch.center.col);
    if patch.channels != raster.channels
        || row < PATCH_HALF
        || col < PATCH_HALF
        || row + PATCH_HALF >= raster.height
        || col + PATCH_HALF >= raster.width
    {
        return Err(Error::OutOfBounds {
            row,
            col,
            height: raster.height,
            width: raster.width,
        });
    }
    for c in 0..patch.channels {
        for i in 0..PATCH_SIZE {
            for j in 0..PATCH_SIZE {
                let (r, cc) = (row - PATCH_HALF + i, col - PATCH_HALF + j);
                raster.values[(c * raster.height + r) * raster.width + cc] = patch.get(c, i, j) as f32;
            }
        }
    }
    Ok(())
}

/// Every patch center whose 25x25 window lies inside the given window,
/// row-major.
pub fn enumerate_window_examples(
    raster: &Raster,
    origin: (usize, usize),
    size: (usize, usize),
) -> Result<Vec<(usize, usize)>> {
    let (h, w) = size;
    if h < PATCH_SIZE || w < PATCH_SIZE {
        return Err(Error::WindowTooSmall { height: h, width: w });
    }
    if origin.0 + h > raster.height || origin.1 + w > raster.width {
        return Err(Error::OutOfBounds {
            row: origin.0 + h - 1,
            col: origin.1 + w - 1,
            height: raster.height,
            width: raster.width,
        });
    }
    let mut out = Vec::with_capacity((h - 2 * PATCH_HALF) * (w - 2 * PATCH_HALF));
    for r in origin.0 + PATCH_HALF..origin.0 + h - PATCH_HALF {
        for c in origin.1 + PATCH_HALF..origin.1 + w - PATCH_HALF {
            out.push((r, c));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MirrorAxis {
    /// Flips rows (top and bottom swap).
    Horizontal,
    /// Flips columns (left and right swap).
    Vertical,
    /// Transposes rows and columns.
    Diagonal,
}

pub const ALL_AXES: [MirrorAxis; 3] = [MirrorAxis::Horizontal, MirrorAxis::Vertical, MirrorAxis::Diagonal];

/// An orthogonal map of patch offsets, `[a, b, c, d]` sending
/// `(di, dj)` to `(a*di + b*dj, c*di + d*dj)`.
pub type Symmetry = [i32; 4];

pub const IDENTITY: Symmetry = [1, 0, 0, 1];

fn axis_matrix(axis: MirrorAxis) -> Symmetry {
    match axis {
        MirrorAxis::Horizontal => [-1, 0, 0, 1],
        MirrorAxis::Vertical => [1, 0, 0, -1],
        MirrorAxis::Diagonal => [0, 1, 1, 0],
    }
}

fn compose(m: Symmetry, n: Symmetry) -> Symmetry {
    [
        m[0] * n[0] + m[1] * n[2],
        m[0] * n[1] + m[1] * n[3],
        m[2] * n[0] + m[3] * n[2],
        m[2] * n[1] + m[3] * n[3],
    ]
}

/// The group generated by the given reflections, identity first.
pub fn symmetry_group(axes: &[MirrorAxis]) -> Vec<Symmetry> {
    let gens: Vec<Symmetry> = axes.iter().map(|&a| axis_matrix(a)).collect();
    let mut group = vec![IDENTITY];
    let mut i = 0;
    while i < group.len() {
        for g in &gens {
            let next = compose(*g, group[i]);
            if !group.contains(&next) {
                group.push(next);
            }
        }
        i += 1;
    }
    group
}

/// The eight symmetries of the square, identity first.
pub fn dihedral_group() -> Vec<Symmetry> {
    symmetry_group(&ALL_AXES)
}

/// Apply a symmetry to a `channels x size x size` block about its center.
pub fn transform_square(values: &[f64], channels: usize, size: usize, m: Symmetry) -> Vec<f64> {
    let half = (size as i32 - 1) / 2;
    let mut out = vec![0.0; values.len()];
    for c in 0..channels {
        let base = c * size * size;
        for i in 0..size {
            for j in 0..size {
                let (di, dj) = (i as i32 - half, j as i32 - half);
                let ti = (m[0] * di + m[1] * dj + half) as usize;
                let tj = (m[2] * di + m[3] * dj + half) as usize;
                out[base + ti * size + tj] = values[base + i * size + j];
            }
        }
    }
    out
}

pub fn apply_symmetry(patch: &Patch, m: Symmetry) -> Patch {
    Patch {
        values: transform_square(&patch.values, patch.channels, PATCH_SIZE, m),
        ..patch.clone()
    }
}

/// The orbit of `patch` under all compositions of the chosen reflections.
/// All three axes give the full 8-element orbit.
pub fn mirror_augment(patch: &Patch, axes: &[MirrorAxis]) -> Vec<Patch> {
    symmetry_group(axes).into_iter().map(|m| apply_symmetry(patch, m)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(c: usize, h: usize, w: usize) -> Raster {
        let values = (0..c * h * w).map(|i| (i as f32 * 0.37).sin()).collect();
        Raster::new("r", c, h, w, values).unwrap()
    }

    #[test]
    fn center_patch_of_minimal_raster_is_whole_raster() {
        let r = ramp(2, 25, 25);
        let p = extract_patch(&r, 12, 12).unwrap();
        assert_eq!(p.values, r.values.iter().map(|&v| v as f64).collect::<Vec<_>>());
        assert!(matches!(extract_patch(&r, 11, 12), Err(Error::OutOfBounds { .. })));
    }

    #[test]
    fn patch_indexes_raster() {
        let r = ramp(3, 128, 128);
        let p = extract_patch(&r, 100, 100).unwrap();
        for c in 0..3 {
            for i in 0..25 {
                for j in 0..25 {
                    assert_eq!(p.get(c, i, j), r.get(c, 88 + i, 88 + j) as f64);
                }
            }
        }
    }

    #[test]
    fn extract_then_embed_is_lossless() {
        let r = ramp(2, 40, 40);
        let p = extract_patch(&r, 20, 17).unwrap();
        let mut blank = Raster::new("r", 2, 40, 40, vec![0.0; 3200]).unwrap();
        embed_patch(&mut blank, &p).unwrap();
        assert_eq!(extract_patch(&blank, 20, 17).unwrap().values, p.values);
    }

    #[test]
    fn window_counts() {
        let r = ramp(1, 200, 200);
        assert_eq!(enumerate_window_examples(&r, (0, 0), (37, 37)).unwrap().len(), 169);
        assert_eq!(enumerate_window_examples(&r, (5, 5), (25, 25)).unwrap(), vec![(17, 17)]);
        assert_eq!(enumerate_window_examples(&r, (0, 0), (153, 153)).unwrap().len(), 16_641);
        assert!(matches!(
            enumerate_window_examples(&r, (0, 0), (24, 40)),
            Err(Error::WindowTooSmall { .. })
        ));
    }

    #[test]
    fn count_law_brute_force() {
        let r = ramp(1, 60, 60);
        for h in 25..=60 {
            for w in 25..=60 {
                let centers = enumerate_window_examples(&r, (0, 0), (h, w)).unwrap();
                assert_eq!(centers.len(), (h - 24) * (w - 24));
            }
        }
    }

    #[test]
    fn orbit_sizes() {
        let r = ramp(2, 25, 25);
        let p = extract_patch(&r, 12, 12).unwrap();
        let all = mirror_augment(&p, &ALL_AXES);
        assert_eq!(all.len(), 8);
        for a in 0..8 {
            for b in a + 1..8 {
                assert_ne!(all[a].values, all[b].values);
            }
        }
        assert_eq!(mirror_augment(&p, &[MirrorAxis::Horizontal]).len(), 2);
        assert_eq!(mirror_augment(&p, &[MirrorAxis::Horizontal, MirrorAxis::Vertical]).len(), 4);
        assert_eq!(mirror_augment(&p, &[]).len(), 1);

        let constant = Patch {
            values: vec![1.5; 2 * 625],
            ..p.clone()
        };
        assert!(mirror_augment(&constant, &ALL_AXES).iter().all(|q| q.values == constant.values));
    }

    #[test]
    fn group_is_closed() {
        let g = dihedral_group();
        for &a in &g {
            for &b in &g {
                assert!(g.contains(&compose(a, b)));
            }
        }
    }

    proptest! {
        #[test]
        fn reflections_are_involutions(seed in 0u32..1000, axis in 0usize..3) {
            let values: Vec<f64> = (0..2 * 625).map(|i| ((i as u32 ^ seed) as f64 * 0.13).cos()).collect();
            let m = axis_matrix(ALL_AXES[axis]);
            let twice = transform_square(&transform_square(&values, 2, 25, m), 2, 25, m);
            prop_assert_eq!(twice, values);
        }
    }
}
