use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::io::LabelRecord;
use super::patch::PATCH_HALF;
use super::raster::Raster;
use crate::error::{Error, Result};

pub type Coord = (usize, usize);

/// Sparse ground truth over a set of rasters.
///
/// Binary mode uses `positives` and `negative_raster_ids`. HSI mode fills
/// `classes` and `pixel_labels` instead.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelSet {
    pub positives: BTreeMap<String, Vec<Coord>>,
    pub negative_raster_ids: Vec<String>,
    pub classes: Option<Vec<String>>,
    pub pixel_labels: Option<BTreeMap<String, BTreeMap<Coord, usize>>>,
}

impl LabelSet {
    pub fn is_hsi(&self) -> bool {
        self.classes.is_some()
    }

    pub fn positive_count(&self) -> usize {
        self.positives.values().map(Vec::len).sum()
    }

    pub fn positive_raster_ids(&self) -> Vec<String> {
        self.positives.keys().cloned().collect()
    }

    /// Check the invariants against the rasters the labels refer to.
    pub fn validate(&self, rasters: &BTreeMap<String, Raster>) -> Result<()> {
        let lookup = |id: &str| {
            rasters
                .get(id)
                .ok_or_else(|| Error::Integrity(format!("labels refer to unknown raster {id}")))
        };
        for (id, coords) in &self.positives {
            let r = lookup(id)?;
            for &(row, col) in coords {
                if row >= r.height || col >= r.width {
                    return Err(Error::OutOfBounds {
                        row,
                        col,
                        height: r.height,
                        width: r.width,
                    });
                }
                if !r.is_evaluable(row, col) {
                    return Err(Error::Integrity(format!("positive ({row}, {col}) on {id} is masked out")));
                }
            }
        }
        let mut seen = BTreeSet::new();
        for id in &self.negative_raster_ids {
            lookup(id)?;
            if self.positives.contains_key(id) {
                return Err(Error::Integrity(format!("raster {id} is listed as both positive and negative")));
            }
            if !seen.insert(id) {
                return Err(Error::Integrity(format!("negative raster {id} listed twice")));
            }
        }
        if let (Some(classes), Some(pixels)) = (&self.classes, &self.pixel_labels) {
            for (id, labels) in pixels {
                let r = lookup(id)?;
                for (&(row, col), &label) in labels {
                    if row >= r.height || col >= r.width {
                        return Err(Error::OutOfBounds {
                            row,
                            col,
                            height: r.height,
                            width: r.width,
                        });
                    }
                    if label >= classes.len() {
                        return Err(Error::Label {
                            label,
                            classes: classes.len(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Positive coordinates far enough from the border to host a full patch.
    pub fn usable_positives(&self, id: &str, raster: &Raster) -> Vec<Coord> {
        self.positives
            .get(id)
            .map(|v| {
                v.iter()
                    .copied()
                    .filter(|&(r, c)| {
                        r >= PATCH_HALF
                            && c >= PATCH_HALF
                            && r + PATCH_HALF < raster.height
                            && c + PATCH_HALF < raster.width
                    })
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Build a binary label set from sidecar records (label 1 = positive)
    /// plus the ids of all-negative rasters.
    pub fn from_records(records: &[LabelRecord], negative_raster_ids: Vec<String>) -> Result<Self> {
        let mut positives: BTreeMap<String, Vec<Coord>> = BTreeMap::new();
        for r in records {
            match r.label {
                1 => positives.entry(r.raster_id.clone()).or_default().push((r.row, r.col)),
                0 => {}
                label => return Err(Error::Label { label, classes: 2 }),
            }
        }
        for v in positives.values_mut() {
            v.sort_unstable();
            v.dedup();
        }
        Ok(LabelSet {
            positives,
            negative_raster_ids,
            ..LabelSet::default()
        })
    }

    /// Sidecar records for every labeled pixel, in a stable order.
    pub fn to_records(&self) -> Vec<LabelRecord> {
        let mut out = Vec::new();
        for (id, coords) in &self.positives {
            out.extend(coords.iter().map(|&(row, col)| LabelRecord {
                raster_id: id.clone(),
                row,
                col,
                label: 1,
            }));
        }
        if let Some(pixels) = &self.pixel_labels {
            for (id, labels) in pixels {
                out.extend(labels.iter().map(|(&(row, col), &label)| LabelRecord {
                    raster_id: id.clone(),
                    row,
                    col,
                    label,
                }));
            }
        }
        out
    }

    /// Restrict to the given raster ids.
    pub fn subset(&self, ids: &BTreeSet<String>) -> LabelSet {
        LabelSet {
            positives: self
                .positives
                .iter()
                .filter(|(k, _)| ids.contains(*k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
            negative_raster_ids: self.negative_raster_ids.iter().filter(|k| ids.contains(*k)).cloned().collect(),
            classes: self.classes.clone(),
            pixel_labels: self.pixel_labels.as_ref().map(|p| {
                p.iter()
                    .filter(|(k, _)| ids.contains(*k))
                    .map(|(k, v)| (k.clone(), v.clone()))
                    .collect()
            }),
        }
    }
}
