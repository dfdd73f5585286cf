//! Sparse pixel-wise detection in large multispectral rasters.
//!
//! The crate trains a 9-layer fully convolutional detector from a handful
//! of labeled positive pixels against an overwhelming pool of negatives.
//! Two training aids address the imbalance: cascaded online hard example
//! mining ([`sampling`]) and an adversarially trained hard negative
//! generator ([`models::generator`]), combined in a 3-stage schedule
//! ([`training`]). Whole rasters are scored by sliding-window inference
//! ([`inference`]) and evaluated with ROC and detections-per-image curves
//! ([`evaluation`]).

pub mod config;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod inference;
pub mod losses;
pub mod models;
pub mod nn;
pub mod sampling;
pub mod tensor;
pub mod training;

pub use error::{Error, ErrorClass, Result};
pub use tensor::Tensor;
