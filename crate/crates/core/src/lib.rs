//! Unsupervised attribute discovery and translation for small image sets.
//!
//! Images are reduced to trivial features (channel means and an
//! average-pooled pixel grid), L2-normalized and projected with PCA;
//! k-means over the projections yields pseudo-labels. A generator conditioned on per-cluster
//! summaries through [`norm::asin_apply`] then learns to move any image
//! toward any cluster, trained against a PatchGAN critic with a
//! classification head and a gradient penalty.
//!
//! ```no_run
//! use xplore::cluster::{kmeans_fit, ClusteringOptions};
//! use xplore::data::{extract_trivial_features, fit_pca, generate_synthetic_dataset, l2_normalize_rows, project_pca};
//! use xplore::nets::{NetConfig, NoiseMode};
//! use xplore::train::{train_in_memory, translate, TrainConfig};
//!
//! # fn main() -> xplore::Result<()> {
//! let images = generate_synthetic_dataset(&"red-circle:32,blue-square:32".parse()?, 16, 0)?;
//! let feats = l2_normalize_rows(&extract_trivial_features(&images, 4)?)?;
//! let model = kmeans_fit(&project_pca(&fit_pca(&feats, 8)?, &feats)?, 2, &ClusteringOptions::default())?;
//!
//! let cfg = TrainConfig { steps: 500, ..TrainConfig::desk() };
//! let net = NetConfig::desk(2, cfg.mode.dim(2, model.dim));
//! let run = train_in_memory(&images, &model, &net, &cfg)?;
//! let moved = translate(&run.state, &images, 1, NoiseMode::Off)?;
//! # Ok(())
//! # }
//! ```

pub mod cli;
pub mod cluster;
pub mod data;
pub mod error;
pub mod eval;
mod format;
pub mod losses;
pub mod montage;
pub mod nets;
pub mod norm;
pub mod params;
pub mod selftest;
pub mod train;

pub use error::{Result, XploreError};
