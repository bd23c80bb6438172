//! Images, feature vectors and the reduction into clustering space.

pub mod features;
pub mod images;
pub mod io;
pub mod pca;

pub use features::{extract_trivial_features, l2_normalize_rows, FeatureMatrix};
pub use images::{generate_synthetic_dataset, Combo, ImageSet, SynthSpec};
pub use io::{read_features, read_images, write_features, write_images};
pub use pca::{effective_rank, fit_pca, project_pca, reconstruct, reconstruction_error, PcaModel};
