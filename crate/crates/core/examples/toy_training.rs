//! Two-cluster toy run: discover the clusters, train at desk scale, then
//! check reconstruction, classifier accuracy and translation direction.

use std::time::Instant;

use xplore::cluster::{kmeans_fit, ClusteringOptions};
use xplore::data::{extract_trivial_features, fit_pca, generate_synthetic_dataset, l2_normalize_rows, project_pca};
use xplore::eval::{classifier_accuracy, cluster_channel_means, label_images, translation_sign_test};
use xplore::nets::NetConfig;
use xplore::train::{train_in_memory, TrainConfig};

fn main() -> xplore::Result<()> {
    let steps: u64 = std::env::args().nth(1).map(|s| s.parse().expect("step count")).unwrap_or(500);
    let spec = "red-circle:32,blue-square:32".parse()?;
    let images = generate_synthetic_dataset(&spec, 16, 3)?;
    let test = generate_synthetic_dataset(&"red-circle:16,blue-square:16".parse()?, 16, 4)?;

    let feats = l2_normalize_rows(&extract_trivial_features(&images, 4)?)?;
    let pca = fit_pca(&feats, 8)?;
    let model = kmeans_fit(&project_pca(&pca, &feats)?, 2, &ClusteringOptions { seed: 1, ..Default::default() })?;
    println!("cluster sizes {:?}", model.sizes());

    let mut cfg = TrainConfig { steps, seed: 7, ..TrainConfig::desk() };
    if let Some(lr) = std::env::args().nth(2) {
        cfg.adam.lr = lr.parse().expect("learning rate");
    }
    let net = NetConfig::desk(2, cfg.mode.dim(2, model.dim));
    let t0 = Instant::now();
    let run = train_in_memory(&images, &model, &net, &cfg)?;
    println!("{} steps in {:.1}s", steps, t0.elapsed().as_secs_f64());
    for (s, r) in run.log.iter().filter(|(s, _)| *s == 1 || s % 50 == 0) {
        println!("step {s:5}  rec {:.4}  cls_real {:.4}  cls_fake {:.4}  adv_d {:.4}  gp {:.4}", r.rec, r.cls_real, r.cls_fake, r.adv_d, r.gp);
    }

    let first = run.log.first().map(|(_, r)| r.rec).unwrap_or(0.0);
    let last = run.log.last().map(|(_, r)| r.rec).unwrap_or(0.0);
    println!("rec {first:.4} -> {last:.4} ({:.0}% drop)", 100.0 * (1.0 - last / first));
    println!("D accuracy on training images {:.3}", classifier_accuracy(&run.state, &images, &model.assignments)?);
    let means = cluster_channel_means(&images, &model.assignments, 2)?;
    let test_labels = label_images(&test, 4, &pca, &model)?;
    let sign = translation_sign_test(&run.state, &test, &test_labels, &means)?;
    println!("translation sign test {}/{} ({:.3})", sign.moved_toward, sign.total, sign.rate());
    Ok(())
}
