//! Voxel-level outlier detection for aligned 3D volumes.
//!
//! Patch representations are learned by a tied-weight stacked denoising
//! autoencoder, fine-tuned as a siamese pair on patches that share a center
//! voxel across healthy subjects. Each voxel then gets its own one-class SVM
//! over those representations; a test subject's signed scores are thresholded
//! at a per-subject quantile, grouped by 26-connectivity, and size-filtered.

pub mod config;
pub mod detector;
pub mod error;
mod io;
pub mod network;
pub mod ocsvm;
pub mod pipeline;
pub mod synthetic;
pub mod volume;

pub use error::{Error, Result};
pub use io::write_atomic;
