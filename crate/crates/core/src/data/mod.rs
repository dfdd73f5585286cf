//! Rasters, labels, patches, synthetic scenes and benchmark loaders.

pub mod dataset;
pub mod hsi;
pub mod io;
pub mod labels;
pub mod patch;
pub mod raster;
pub mod synth;

pub use dataset::{Dataset, Manifest, SplitIds};
pub use hsi::{load_hsi_benchmark, mirror_pad, split_per_class, HsiName, HsiSplit};
pub use io::{load_raster, LabelRecord, RasterFormat};
pub use labels::{Coord, LabelSet};
pub use patch::{
    enumerate_window_examples, extract_patch, mirror_augment, MirrorAxis, Patch, PatchCenter, Provenance,
};
pub use raster::{normalize, ChannelStats, Raster};
pub use synth::{generate_benchmark, generate_synthetic_scene, BenchmarkConfig, Season, SynthConfig};
