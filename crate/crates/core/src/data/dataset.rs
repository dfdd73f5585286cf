//! On-disk dataset layout: a `manifest.toml`, one file per raster and a
//! label sidecar.
//!
//! ```toml
//! format = "native-binary"
//! labels = "labels.txt"
//!
//! [train]
//! positive = ["train-pos-0"]
//! negative = ["train-neg-0"]
//!
//! [test]
//! positive = ["test-pos-0"]
//! negative = ["test-neg-0"]
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::io::{format_label_records, load_raster, read_label_records, write_flat, write_native, RasterFormat};
use super::labels::LabelSet;
use super::raster::Raster;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitIds {
    #[serde(default)]
    pub positive: Vec<String>,
    #[serde(default)]
    pub negative: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: RasterFormat,
    pub labels: String,
    pub train: SplitIds,
    #[serde(default)]
    pub test: SplitIds,
}

/// Rasters with train and test ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rasters: BTreeMap<String, Raster>,
    pub train: LabelSet,
    pub test: LabelSet,
}

pub fn raster_file_name(id: &str, format: RasterFormat) -> String {
    match format {
        RasterFormat::NativeBinary => format!("{id}.rtr"),
        RasterFormat::FlatArrayWithSidecar => format!("{id}.f32"),
    }
}

fn split_ids(labels: &LabelSet, rasters: &BTreeMap<String, Raster>) -> SplitIds {
    // Positive rasters without any labels still belong to the split.
    let negatives: BTreeSet<&String> = labels.negative_raster_ids.iter().collect();
    let mut positive: Vec<String> = labels.positives.keys().cloned().collect();
    if let Some(pixels) = &labels.pixel_labels {
        positive.extend(pixels.keys().cloned());
    }
    positive.retain(|id| rasters.contains_key(id) && !negatives.contains(id));
    positive.sort();
    positive.dedup();
    SplitIds {
        positive,
        negative: labels.negative_raster_ids.clone(),
    }
}

impl Dataset {
    pub fn manifest(&self, format: RasterFormat) -> Manifest {
        Manifest {
            format,
            labels: "labels.txt".into(),
            train: split_ids(&self.train, &self.rasters),
            test: split_ids(&self.test, &self.rasters),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate(&self.rasters)?;
        self.test.validate(&self.rasters)?;
        let train_ids: BTreeSet<&String> =
            self.train.positives.keys().chain(&self.train.negative_raster_ids).collect();
        if let Some(id) = self.test.positives.keys().chain(&self.test.negative_raster_ids).find(|id| train_ids.contains(id)) {
            return Err(Error::Integrity(format!("raster {id} is in both the training and the test split")));
        }
        Ok(())
    }

    /// Write the manifest, rasters and label sidecar into `dir`.
    pub fn write(&self, dir: &Path, format: RasterFormat) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = self.manifest(format);
        let text = toml::to_string(&manifest).map_err(|e| Error::Format(format!("manifest: {e}")))?;
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        for (id, r) in &self.rasters {
            let path = dir.join(raster_file_name(id, format));
            match format {
                RasterFormat::NativeBinary => write_native(r, &path)?,
                RasterFormat::FlatArrayWithSidecar => write_flat(r, &path)?,
            }
        }
        let mut records = self.train.to_records();
        records.extend(self.test.to_records());
        let path = dir.join(&manifest.labels);
        std::fs::write(&path, format_label_records(&records)).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let mut rasters = BTreeMap::new();
        let all = manifest
            .train
            .positive
            .iter()
            .chain(&manifest.train.negative)
            .chain(&manifest.test.positive)
            .chain(&manifest.test.negative);
        for id in all {
            let p: PathBuf = dir.join(raster_file_name(id, manifest.format));
            let mut r = load_raster(&p, manifest.format)?;
            r.id = id.clone();
            if rasters.insert(id.clone(), r).is_some() {
                return Err(Error::Integrity(format!("raster {id} listed more than once in the manifest")));
            }
        }
        let records = read_label_records(&dir.join(&manifest.labels))?;
        let mut by_split: [Vec<_>; 2] = [Vec::new(), Vec::new()];
        for r in records {
            if manifest.train.positive.contains(&r.raster_id) {
                by_split[0].push(r);
            } else if manifest.test.positive.contains(&r.raster_id) {
                by_split[1].push(r);
            } else {
                return Err(Error::Integrity(format!(
                    "label for {} which is not a positive raster of the manifest",
                    r.raster_id
                )));
            }
        }
        let [train_records, test_records] = by_split;
        let ds = Dataset {
            train: LabelSet::from_records(&train_records, manifest.train.negative.clone())?,
            test: LabelSet::from_records(&test_records, manifest.test.negative.clone())?,
            rasters,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn train_rasters(&self) -> impl Iterator<Item = &Raster> {
        self.train
            .positives
            .keys()
            .chain(&self.train.negative_raster_ids)
            .filter_map(|id| self.rasters.get(id))
    }
}
