//! Hyperspectral benchmark loaders (MATLAB v5 distribution files) and the
//! fixed-count-per-category split.

use std::collections::BTreeMap;
use std::path::Path;

use matfile::{MatFile, NumericData};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::labels::{Coord, LabelSet};
use super::raster::Raster;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HsiName {
    IndianPines,
    Salinas,
    Paviau,
}

impl HsiName {
    pub const ALL: [HsiName; 3] = [HsiName::IndianPines, HsiName::Salinas, HsiName::Paviau];

    pub fn id(self) -> &'static str {
        match self {
            HsiName::IndianPines => "indian_pines",
            HsiName::Salinas => "salinas",
            HsiName::Paviau => "paviau",
        }
    }

    /// (cube file, cube variable, ground-truth file, ground-truth variable)
    pub fn files(self) -> (&'static str, &'static str, &'static str, &'static str) {
        match self {
            HsiName::IndianPines => (
                "Indian_pines_corrected.mat",
                "indian_pines_corrected",
                "Indian_pines_gt.mat",
                "indian_pines_gt",
            ),
            HsiName::Salinas => ("Salinas_corrected.mat", "salinas_corrected", "Salinas_gt.mat", "salinas_gt"),
            HsiName::Paviau => ("PaviaU.mat", "paviaU", "PaviaU_gt.mat", "paviaU_gt"),
        }
    }

    pub fn files_present(self, dir: &Path) -> bool {
        let (cube, _, gt, _) = self.files();
        dir.join(cube).is_file() && dir.join(gt).is_file()
    }
}

impl std::str::FromStr for HsiName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        HsiName::ALL
            .into_iter()
            .find(|n| n.id() == s)
            .ok_or_else(|| Error::Config(format!("unknown HSI dataset {s:?}")))
    }
}

fn numeric_to_f64(data: &NumericData) -> Vec<f64> {
    match data {
        NumericData::Int8 { real, .. } => real.iter().map(|&v| v as f64).collect(),
        NumericData::UInt8 { real, .. } => real.iter().map(|&v| v as f64).collect(),
        NumericData::Int16 { real, .. } => real.iter().map(|&v| v as f64).collect(),
        NumericData::UInt16 { real, .. } => real.iter().map(|&v| v as f64).collect(),
        NumericData::Int32 { real, .. } => real.iter().map(|&v| v as f64).collect(),
        NumericData::UInt32 { real, .. } => real.iter().map(|&v| v as f64).collect(),
        NumericData::Int64 { real, .. } => real.iter().map(|&v| v as f64).collect(),
        NumericData::UInt64 { real, .. } => real.iter().map(|&v| v as f64).collect(),
        NumericData::Single { real, .. } => real.iter().map(|&v| v as f64).collect(),
        NumericData::Double { real, .. } => real.clone(),
    }
}

/// Read one numeric array, preferring `name` and falling back to the only
/// array of the expected rank.
fn read_mat_array(path: &Path, name: &str, rank: usize) -> Result<(Vec<usize>, Vec<f64>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mat = MatFile::parse(file).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let array = match mat.find_by_name(name) {
        Some(a) => a,
        None => {
            let mut candidates = mat.arrays().iter().filter(|a| a.ndims() == rank);
            match (candidates.next(), candidates.next()) {
                (Some(a), None) => a,
                _ => {
                    return Err(Error::Format(format!(
                        "{}: no array named {name} and no unique rank-{rank} array",
                        path.display()
                    )))
                }
            }
        }
    };
    if array.ndims() != rank {
        return Err(Error::Integrity(format!(
            "{}: array {} has shape {:?}, expected rank {rank}",
            path.display(),
            array.name(),
            array.size()
        )));
    }
    Ok((array.size().clone(), numeric_to_f64(array.data())))
}

/// Load a benchmark cube and its ground truth. Category `k >= 1` in the
/// ground-truth map becomes label `k - 1`; zero (unlabeled) pixels are left
/// out of the label set.
pub fn load_hsi_benchmark(name: HsiName, dir: &Path) -> Result<(Raster, LabelSet)> {
    let (cube_file, cube_var, gt_file, gt_var) = name.files();
    let (cube_shape, cube) = read_mat_array(&dir.join(cube_file), cube_var, 3)?;
    let (gt_shape, gt) = read_mat_array(&dir.join(gt_file), gt_var, 2)?;
    let (h, w, bands) = (cube_shape[0], cube_shape[1], cube_shape[2]);
    if gt_shape != [h, w] {
        return Err(Error::Integrity(format!(
            "{}: ground truth {:?} does not match cube {h}x{w}",
            name.id(),
            gt_shape
        )));
    }
    // MAT arrays are column-major: element (r, c, b) sits at r + h*(c + w*b).
    let mut values = vec![0f32; bands * h * w];
    for b in 0..bands {
        for c in 0..w {
            for r in 0..h {
                values[(b * h + r) * w + c] = cube[r + h * (c + w * b)] as f32;
            }
        }
    }
    let raster = Raster::new(name.id(), bands, h, w, values)?;
    let mut pixels = BTreeMap::new();
    let mut classes = 0usize;
    for c in 0..w {
        for r in 0..h {
            let v = gt[r + h * c];
            if v < 0.0 || v.fract() != 0.0 {
                return Err(Error::Integrity(format!("{}: ground-truth value {v} is not a category", name.id())));
            }
            let k = v as usize;
            if k > 0 {
                pixels.insert((r, c), k - 1);
                classes = classes.max(k);
            }
        }
    }
    let labels = LabelSet {
        classes: Some((1..=classes).map(|k| format!("class{k}")).collect()),
        pixel_labels: Some(BTreeMap::from([(raster.id.clone(), pixels)])),
        ..LabelSet::default()
    };
    Ok((raster, labels))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HsiSplit {
    pub train: Vec<(Coord, usize)>,
    pub test: Vec<(Coord, usize)>,
    /// One message per category that could not supply the requested count.
    pub warnings: Vec<String>,
}

/// Draw `per_class` training pixels from each category; the remainder is
/// the test pool. Categories with fewer pixels go entirely to training.
pub fn split_per_class(pixels: &BTreeMap<Coord, usize>, classes: usize, per_class: usize, seed: u64) -> HsiSplit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<Coord>> = vec![Vec::new(); classes];
    for (&coord, &label) in pixels {
        if label < classes {
            by_class[label].push(coord);
        }
    }
    let mut split = HsiSplit {
        train: Vec::new(),
        test: Vec::new(),
        warnings: Vec::new(),
    };
    for (label, mut coords) in by_class.into_iter().enumerate() {
        if coords.len() < per_class {
            let msg = format!(
                "category {label} has {} labeled pixels, fewer than {per_class}; all used for training",
                coords.len()
            );
            log::warn!("{msg}");
            split.warnings.push(msg);
            split.train.extend(coords.into_iter().map(|c| (c, label)));
            continue;
        }
        coords.shuffle(&mut rng);
        let rest = coords.split_off(per_class);
        split.train.extend(coords.into_iter().map(|c| (c, label)));
        split.test.extend(rest.into_iter().map(|c| (c, label)));
    }
    split
}

/// Reflect the raster across its edges by `pad` pixels (edge pixel not
/// repeated), so every pixel can host a centered patch.
pub fn mirror_pad(raster: &Raster, pad: usize) -> Result<Raster> {
    let (h, w) = (raster.height, raster.width);
    if pad >= h || pad >= w {
        return Err(Error::Shape(format!("cannot mirror-pad a {h}x{w} raster by {pad}")));
    }
    let reflect = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let j = if i < 0 { -i } else if i >= n { 2 * (n - 1) - i } else { i };
        j as usize
    };
    let (ph, pw) = (h + 2 * pad, w + 2 * pad);
    let mut values = Vec::with_capacity(raster.channels * ph * pw);
    for c in 0..raster.channels {
        for r in 0..ph {
            let sr = reflect(r as isize - pad as isize, h);
            for col in 0..pw {
                values.push(raster.get(c, sr, reflect(col as isize - pad as isize, w)));
            }
        }
    }
    Raster::new(raster.id.clone(), raster.channels, ph, pw, values)
}
