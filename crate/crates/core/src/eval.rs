//! Feature reduction for new images and measurements on trained networks.

use crate::cluster::{assign_clusters, ClusterModel};
use crate::data::{extract_trivial_features, l2_normalize_rows, project_pca, FeatureMatrix, ImageSet, PcaModel};
use crate::error::{invalid, Result, XploreError};
use crate::nets::NoiseMode;
use crate::train::{translate, TrainState, TRANSLATE_CHUNK};

/// Trivial features, L2 normalization and projection through a fitted PCA.
pub fn reduce_features(images: &ImageSet, factor: usize, pca: &PcaModel) -> Result<FeatureMatrix> {
    project_pca(pca, &l2_normalize_rows(&extract_trivial_features(images, factor)?)?)
}

/// Pseudo-labels for images outside the clustered set.
pub fn label_images(images: &ImageSet, factor: usize, pca: &PcaModel, model: &ClusterModel) -> Result<Vec<usize>> {
    assign_clusters(model, &reduce_features(images, factor, pca)?)
}

/// Fraction of images whose arg-max classifier logit equals their label.
pub fn classifier_accuracy(state: &TrainState, images: &ImageSet, labels: &[usize]) -> Result<f64> {
    if labels.len() != images.count || images.count == 0 {
        return invalid(format!("{} labels for {} images", labels.len(), images.count));
    }
    let mut hits = 0;
    for start in (0..images.count).step_by(TRANSLATE_CHUNK) {
        let idx: Vec<usize> = (start..(start + TRANSLATE_CHUNK).min(images.count)).collect();
        let (_, logits) = state.d.forward(&images.batch_tensor(&idx))?;
        let k = logits.shape()[1];
        for (row, &i) in logits.data().chunks(k).zip(&idx) {
            let best = (0..k).max_by(|&a, &b| row[a].total_cmp(&row[b]).then(b.cmp(&a))).unwrap_or(0);
            hits += usize::from(best == labels[i]);
        }
    }
    Ok(hits as f64 / images.count as f64)
}

/// Per-channel mean of every cluster's member images, `k × channels`.
pub fn cluster_channel_means(images: &ImageSet, labels: &[usize], k: usize) -> Result<Vec<Vec<f64>>> {
    if labels.len() != images.count {
        return invalid(format!("{} labels for {} images", labels.len(), images.count));
    }
    let mut sums = vec![vec![0.0; images.channels]; k];
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        if l >= k {
            return Err(XploreError::ClusterOutOfRange { cluster: l, k });
        }
        for (s, m) in sums[l].iter_mut().zip(images.channel_means(i)) {
            *s += m;
        }
        counts[l] += 1;
    }
    for (j, (s, &c)) in sums.iter_mut().zip(&counts).enumerate() {
        if c == 0 {
            return Err(XploreError::EmptyCluster(j));
        }
        s.iter_mut().for_each(|v| *v /= c as f64);
    }
    Ok(sums)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignTest {
    pub moved_toward: usize,
    pub total: usize,
}

impl SignTest {
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.moved_toward as f64 / self.total as f64
        }
    }
}

/// Translates each image toward every other cluster and checks whether its
/// mean on the target's dominant channel moves toward the target's mean.
///
/// The dominant channel for source `s` and target `t` is the one where the
/// two clusters' mean images differ most.
pub fn translation_sign_test(
    state: &TrainState,
    images: &ImageSet,
    labels: &[usize],
    means: &[Vec<f64>],
) -> Result<SignTest> {
    let k = state.net.k;
    if means.len() != k {
        return invalid(format!("{} cluster means for k = {k}", means.len()));
    }
    let mut test = SignTest { moved_toward: 0, total: 0 };
    for t in 0..k {
        let idx: Vec<usize> = (0..images.count).filter(|&i| labels[i] != t).collect();
        if idx.is_empty() {
            continue;
        }
        let src = images.select(&idx);
        let out = translate(state, &src, t, NoiseMode::Off)?;
        for (j, &i) in idx.iter().enumerate() {
            let s = labels[i];
            let ch = (0..images.channels)
                .max_by(|&a, &b| {
                    let da = (means[t][a] - means[s][a]).abs();
                    let db = (means[t][b] - means[s][b]).abs();
                    da.total_cmp(&db).then(b.cmp(&a))
                })
                .unwrap_or(0);
            let before = src.channel_means(j)[ch];
            let after = out.channel_means(j)[ch];
            let want = means[t][ch] - before;
            test.total += 1;
            test.moved_toward += usize::from((after - before) * want > 0.0);
        }
    }
    Ok(test)
}
