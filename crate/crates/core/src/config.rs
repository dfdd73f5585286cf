//! Run configuration shared by every command.
//!
//! A run config is a TOML document; every key has a default, unknown keys
//! are rejected, and any key can be overridden as `dotted.key=value`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::io::RasterFormat;
use crate::data::synth::BenchmarkConfig;
use crate::error::{Error, Result};
use crate::inference::DEFAULT_WINDOW;
use crate::training::TrainConfig;

/// Annotated defaults, as written by `redtide config`.
pub const DEFAULT_CONFIG_TOML: &str = include_str!("../../../configs/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset directory (a `manifest.toml` and its files).
    pub data: Option<PathBuf>,
    /// Output directory; relative paths resolve against the output root.
    pub output: Option<PathBuf>,
    pub synth: SynthSection,
    pub train: TrainConfig,
    pub infer: InferSection,
    pub eval: EvalSection,
    pub hsi: HsiSection,
    pub features: FeatureSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            output: None,
            synth: SynthSection::default(),
            train: TrainConfig::default(),
            infer: InferSection::default(),
            eval: EvalSection::default(),
            hsi: HsiSection::default(),
            features: FeatureSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub seed: u64,
    pub format: RasterFormat,
    pub benchmark: BenchmarkConfig,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            seed: 0,
            format: RasterFormat::NativeBinary,
            benchmark: BenchmarkConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitChoice {
    Train,
    Test,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferSection {
    pub checkpoint: Option<PathBuf>,
    /// Square window side in pixels.
    pub window: usize,
    pub split: SplitChoice,
}

impl Default for InferSection {
    fn default() -> Self {
        InferSection {
            checkpoint: None,
            window: DEFAULT_WINDOW,
            split: SplitChoice::Test,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Directory of score maps written by `infer`.
    pub scores: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HsiSection {
    pub name: String,
    pub dir: Option<PathBuf>,
    /// Independent train/test draws to average over.
    pub splits: usize,
}

impl Default for HsiSection {
    fn default() -> Self {
        HsiSection {
            name: "indian_pines".into(),
            dir: None,
            splits: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSection {
    pub checkpoint: Option<PathBuf>,
    /// Patches drawn per group (positive, real negative, generated negative).
    pub per_group: usize,
    pub split: SplitChoice,
}

impl Default for FeatureSection {
    fn default() -> Self {
        FeatureSection {
            checkpoint: None,
            per_group: 500,
            split: SplitChoice::Test,
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    // Parse as a TOML value when possible, else take the text verbatim.
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Set `dotted.key` inside `doc`, creating tables on the way.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key {key:?}")));
    }
    let mut table = doc;
    for p in &parts[..parts.len() - 1] {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?} descends into a non-table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl RunConfig {
    /// Parse `text` (possibly empty), then apply overrides in order.
    pub fn from_toml_with(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("config: {e}")))?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml_with(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_defaults_match_code_defaults() {
        let parsed = RunConfig::from_toml_with(DEFAULT_CONFIG_TOML, &[]).unwrap();
        assert_eq!(parsed, RunConfig::default());
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let cfg = RunConfig::from_toml_with(
            "",
            &[
                "train.sampler.window_count=7".into(),
                "train.mode=rtd-single".into(),
                "train.detector_lr=0.5".into(),
                "data=some/dir".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.train.sampler.window_count, 7);
        assert_eq!(cfg.train.mode, crate::training::TrainMode::RtdSingle);
        assert_eq!(cfg.train.detector_lr, 0.5);
        assert_eq!(cfg.data, Some(PathBuf::from("some/dir")));
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        for bad in ["train.bogus=1", "nonsense=3", "train.momentum=-1"] {
            let e = RunConfig::from_toml_with("", &[bad.into()]).unwrap_err();
            assert!(matches!(e, Error::Config(_)), "{bad}: {e}");
        }
        assert!(RunConfig::from_toml_with("", &["novalue".into()]).is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_toml_with(&cfg.to_toml(), &[]).unwrap(), cfg);
    }
}
