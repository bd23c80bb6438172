#![allow(dead_code)]

use xplore::cluster::{kmeans_fit, ClusterModel, ClusteringOptions};
use xplore::data::{extract_trivial_features, fit_pca, generate_synthetic_dataset, l2_normalize_rows, project_pca, ImageSet, PcaModel};
use xplore::nets::NetConfig;
use xplore::train::TrainConfig;

pub struct Toy {
    pub images: ImageSet,
    pub pca: PcaModel,
    pub model: ClusterModel,
}

/// Two-cluster colored shapes, clustered through the feature pipeline.
pub fn toy(spec: &str, seed: u64, pca_dim: usize) -> Toy {
    let images = generate_synthetic_dataset(&spec.parse().unwrap(), 16, seed).unwrap();
    let feats = l2_normalize_rows(&extract_trivial_features(&images, 4).unwrap()).unwrap();
    let pca = fit_pca(&feats, pca_dim).unwrap();
    let reduced = project_pca(&pca, &feats).unwrap();
    let model = kmeans_fit(&reduced, 2, &ClusteringOptions { seed: 1, ..Default::default() }).unwrap();
    Toy { images, pca, model }
}

/// A desk network cut down so a step takes milliseconds.
pub fn small_net(cfg: &TrainConfig, model: &ClusterModel) -> NetConfig {
    NetConfig {
        base_width: 4,
        n_res_enc: 1,
        n_res_dec: 1,
        mlp_depth: 3,
        mlp_hidden: 16,
        ..NetConfig::desk(model.k, cfg.mode.dim(model.k, model.dim))
    }
}

pub fn small_train(steps: u64, seed: u64) -> TrainConfig {
    TrainConfig { steps, seed, batch: 4, n_critic: 2, ..TrainConfig::desk() }
}
