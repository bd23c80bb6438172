//! Train briefly on two clusters, then translate every image toward each
//! cluster and write PPM montages (inputs on top, translations below).

use std::path::PathBuf;

use xplore::cluster::{kmeans_fit, ClusteringOptions};
use xplore::data::{extract_trivial_features, fit_pca, generate_synthetic_dataset, l2_normalize_rows, project_pca};
use xplore::montage::{emit_montage, stack};
use xplore::nets::{NetConfig, NoiseMode};
use xplore::train::{train_in_memory, translate, TrainConfig};

fn main() -> xplore::Result<()> {
    let steps: u64 = std::env::args().nth(1).map(|s| s.parse().expect("step count")).unwrap_or(100);
    let out_dir = PathBuf::from(std::env::args().nth(2).unwrap_or_else(|| ".".into()));
    let images = generate_synthetic_dataset(&"red-circle:16,blue-square:16".parse()?, 16, 3)?;
    let feats = l2_normalize_rows(&extract_trivial_features(&images, 4)?)?;
    let model = kmeans_fit(&project_pca(&fit_pca(&feats, 8)?, &feats)?, 2, &ClusteringOptions::default())?;

    let cfg = TrainConfig { steps, seed: 1, ..TrainConfig::desk() };
    let net = NetConfig::desk(2, cfg.mode.dim(2, model.dim));
    let state = train_in_memory(&images, &model, &net, &cfg)?.state;

    let shown = images.select(&(0..8).chain(16..24).collect::<Vec<_>>());
    for target in 0..2 {
        let moved = translate(&state, &shown, target, NoiseMode::Off)?;
        let path = out_dir.join(format!("toward-{target}.ppm"));
        emit_montage(&stack(&shown, &moved)?, 2, shown.count, &path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
