//! Colored shapes in, pseudo-labels out: features, L2, PCA, k-means, NMI.

use xplore::cluster::{clustering_metrics, kmeans_fit, ClusteringOptions};
use xplore::data::{extract_trivial_features, fit_pca, generate_synthetic_dataset, l2_normalize_rows, project_pca};

fn main() -> xplore::Result<()> {
    let images = generate_synthetic_dataset(&"6x100".parse()?, 16, 1)?;
    let feats = l2_normalize_rows(&extract_trivial_features(&images, 4)?)?;
    let pca = fit_pca(&feats, 16)?;
    let reduced = project_pca(&pca, &feats)?;
    println!("features {}x{} -> {}x{}", feats.rows, feats.cols, reduced.rows, reduced.cols);

    let opts = ClusteringOptions { restarts: 20, seed: 1, ..Default::default() };
    let model = kmeans_fit(&reduced, 6, &opts)?;
    let truth: Vec<usize> = images.truth_labels.as_ref().unwrap().iter().map(|&l| l as usize).collect();
    let m = clustering_metrics(&model.assignments, &truth)?;
    println!("inertia {:.4}  sizes {:?}", model.inertia, model.sizes());
    println!("NMI {:.4}  ARI {:.4}", m.nmi, m.ari);
    let mut table = vec![[0usize; 6]; 6];
    for (p, t) in model.assignments.iter().zip(&truth) {
        table[*p][*t] += 1;
    }
    for row in table {
        println!("{row:?}");
    }
    Ok(())
}
