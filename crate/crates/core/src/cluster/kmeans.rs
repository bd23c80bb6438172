//! Lloyd's k-means with k-means++ seeding, restarts and an exhaustive oracle.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{invalid, Result, XploreError};

/// Floor applied to every per-dimension cluster standard deviation.
pub const SIGMA_FLOOR: f64 = 1e-4;

/// Largest `kⁿ` the exhaustive solver accepts.
pub const BRUTE_FORCE_LIMIT: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    KMeansPlusPlus,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusteringOptions {
    pub init: Init,
    pub restarts: usize,
    pub max_iters: usize,
    /// Stop once the relative inertia improvement drops below this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for ClusteringOptions {
    fn default() -> Self {
        Self { init: Init::KMeansPlusPlus, restarts: 10, max_iters: 300, tol: 1e-9, seed: 0 }
    }
}

impl ClusteringOptions {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return invalid("restarts must be at least 1");
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return invalid(format!("tol must be positive, got {}", self.tol));
        }
        if self.max_iters == 0 {
            return invalid("max_iters must be at least 1");
        }
        Ok(())
    }
}

/// Centroids, per-cluster standard deviations and the hard partition.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub k: usize,
    pub dim: usize,
    /// `k × dim` row-major.
    pub centroids: Vec<f64>,
    /// `k × dim` row-major, every entry at least [`SIGMA_FLOOR`].
    pub stds: Vec<f64>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
}

impl ClusterModel {
    pub fn centroid(&self, j: usize) -> &[f64] {
        &self.centroids[j * self.dim..(j + 1) * self.dim]
    }

    pub fn std(&self, j: usize) -> &[f64] {
        &self.stds[j * self.dim..(j + 1) * self.dim]
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &a in &self.assignments {
            s[a] += 1;
        }
        s
    }
}

/// Inertia after every assignment step of one Lloyd run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub inertia_history: Vec<f64>,
    pub final_inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid per point (lowest index on ties) and the resulting inertia.
fn assign(features: &FeatureMatrix, centroids: &[f64], k: usize) -> (Vec<usize>, f64) {
    let d = features.cols;
    let mut labels = Vec::with_capacity(features.rows);
    let mut inertia = 0.0;
    for row in features.rows_iter() {
        let mut best = (0, f64::INFINITY);
        for j in 0..k {
            let dist = sq_dist(row, &centroids[j * d..(j + 1) * d]);
            if dist < best.1 {
                best = (j, dist);
            }
        }
        labels.push(best.0);
        inertia += best.1;
    }
    (labels, inertia)
}

fn member_means(features: &FeatureMatrix, labels: &[usize], k: usize) -> (Vec<f64>, Vec<usize>) {
    let d = features.cols;
    let mut sums = vec![0.0; k * d];
    let mut counts = vec![0usize; k];
    for (row, &l) in features.rows_iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l * d..(l + 1) * d].iter_mut().zip(row) {
            *s += v;
        }
    }
    for j in 0..k {
        if counts[j] > 0 {
            for s in &mut sums[j * d..(j + 1) * d] {
                *s /= counts[j] as f64;
            }
        }
    }
    (sums, counts)
}

/// Mean update; each empty cluster takes over the point farthest from its
/// current centroid.
fn update_centroids(features: &FeatureMatrix, labels: &[usize], k: usize) -> Vec<f64> {
    let d = features.cols;
    let (mut cents, counts) = member_means(features, labels, k);
    let mut seized = vec![false; features.rows];
    for j in (0..k).filter(|&j| counts[j] == 0) {
        let mut far = None;
        let mut far_d = -1.0;
        for (i, row) in features.rows_iter().enumerate() {
            if seized[i] {
                continue;
            }
            let l = labels[i];
            let dist = sq_dist(row, &cents[l * d..(l + 1) * d]);
            if dist > far_d {
                far_d = dist;
                far = Some(i);
            }
        }
        if let Some(i) = far {
            seized[i] = true;
            cents[j * d..(j + 1) * d].copy_from_slice(features.row(i));
        }
    }
    cents
}

fn init_centroids(features: &FeatureMatrix, k: usize, init: Init, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = features.rows;
    let chosen: Vec<usize> = match init {
        Init::Random => sample(rng, n, k).into_vec(),
        Init::KMeansPlusPlus => {
            let mut chosen = vec![rng.random_range(0..n)];
            let mut d2: Vec<f64> = features.rows_iter().map(|r| sq_dist(r, features.row(chosen[0]))).collect();
            while chosen.len() < k {
                let total: f64 = d2.iter().sum();
                let next = if total > 0.0 {
                    let mut target = rng.random::<f64>() * total;
                    let mut pick = n - 1;
                    for (i, &w) in d2.iter().enumerate() {
                        if w > 0.0 && target < w {
                            pick = i;
                            break;
                        }
                        target -= w;
                    }
                    while d2[pick] == 0.0 {
                        pick -= 1;
                    }
                    pick
                } else {
                    let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
                    free[rng.random_range(0..free.len())]
                };
                chosen.push(next);
                for (i, row) in features.rows_iter().enumerate() {
                    d2[i] = d2[i].min(sq_dist(row, features.row(next)));
                }
            }
            chosen
        }
    };
    chosen.iter().flat_map(|&i| features.row(i).to_vec()).collect()
}

fn lloyd(features: &FeatureMatrix, k: usize, opts: &ClusteringOptions, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<usize>, RunTrace) {
    let mut centroids = init_centroids(features, k, opts.init, rng);
    let mut history = Vec::new();
    let mut prev: Option<Vec<usize>> = None;
    loop {
        let (labels, inertia) = assign(features, &centroids, k);
        let improvement = history.last().map(|&p: &f64| if p > 0.0 { (p - inertia) / p } else { 0.0 });
        history.push(inertia);
        let unchanged = prev.as_ref() == Some(&labels);
        let stalled = improvement.is_some_and(|r| r < opts.tol);
        if unchanged || stalled || history.len() >= opts.max_iters {
            let trace = RunTrace { final_inertia: inertia, inertia_history: history };
            return (centroids, labels, trace);
        }
        centroids = update_centroids(features, &labels, k);
        prev = Some(labels);
    }
}

fn check_input(features: &FeatureMatrix, k: usize) -> Result<()> {
    if k == 0 {
        return invalid("k must be positive");
    }
    if k > features.rows {
        return invalid(format!("k = {k} exceeds the number of points {}", features.rows));
    }
    if features.values.iter().any(|v| !v.is_finite()) {
        return Err(XploreError::NonFinite("features".into()));
    }
    Ok(())
}

/// Best of `opts.restarts` Lloyd runs together with every run's trace.
pub fn kmeans_fit_traced(features: &FeatureMatrix, k: usize, opts: &ClusteringOptions) -> Result<(ClusterModel, Vec<RunTrace>)> {
    check_input(features, k)?;
    opts.validate()?;
    let mut best: Option<(Vec<f64>, Vec<usize>, f64)> = None;
    let mut traces = Vec::with_capacity(opts.restarts);
    for run in 0..opts.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(run as u64);
        let (c, l, trace) = lloyd(features, k, opts, &mut rng);
        if best.as_ref().is_none_or(|b| trace.final_inertia < b.2) {
            best = Some((c, l, trace.final_inertia));
        }
        traces.push(trace);
    }
    let (centroids, assignments, inertia) = best.expect("at least one restart");
    let stds = floored_stds(features, &assignments, &centroids, k);
    let model = ClusterModel { k, dim: features.cols, centroids, stds, assignments, inertia };
    Ok((model, traces))
}

/// k-means partition minimizing within-cluster squared distance.
pub fn kmeans_fit(features: &FeatureMatrix, k: usize, opts: &ClusteringOptions) -> Result<ClusterModel> {
    Ok(kmeans_fit_traced(features, k, opts)?.0)
}

fn floored_stds(features: &FeatureMatrix, labels: &[usize], centroids: &[f64], k: usize) -> Vec<f64> {
    let d = features.cols;
    let mut acc = vec![0.0; k * d];
    let mut counts = vec![0usize; k];
    for (row, &l) in features.rows_iter().zip(labels) {
        counts[l] += 1;
        for j in 0..d {
            let c = row[j] - centroids[l * d + j];
            acc[l * d + j] += c * c;
        }
    }
    for j in 0..k {
        for v in &mut acc[j * d..(j + 1) * d] {
            *v = if counts[j] > 0 { (*v / counts[j] as f64).sqrt().max(SIGMA_FLOOR) } else { SIGMA_FLOOR };
        }
    }
    acc
}

/// Nearest-centroid labels for new points.
pub fn assign_clusters(model: &ClusterModel, features: &FeatureMatrix) -> Result<Vec<usize>> {
    if features.cols != model.dim {
        return Err(XploreError::DimensionMismatch { expected: model.dim, found: features.cols });
    }
    Ok(assign(features, &model.centroids, model.k).0)
}

/// Member means and floored population standard deviations, each `k × dim`.
pub fn compute_cluster_stats(features: &FeatureMatrix, labels: &[usize], k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if labels.len() != features.rows {
        return Err(XploreError::DimensionMismatch { expected: features.rows, found: labels.len() });
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= k) {
        return Err(XploreError::ClusterOutOfRange { cluster: l, k });
    }
    let (mu, counts) = member_means(features, labels, k);
    if let Some(j) = counts.iter().position(|&c| c == 0) {
        return Err(XploreError::EmptyCluster(j));
    }
    let sigma = floored_stds(features, labels, &mu, k);
    Ok((mu, sigma))
}

/// Exact minimizer of the k-means objective by enumerating every partition
/// into `k` nonempty clusters.
pub fn brute_force_kmeans(features: &FeatureMatrix, k: usize) -> Result<ClusterModel> {
    check_input(features, k)?;
    let n = features.rows;
    let total = (k as u64).checked_pow(n as u32).filter(|&t| t <= BRUTE_FORCE_LIMIT);
    let Some(total) = total else {
        return invalid(format!("{k}^{n} assignments exceed the brute-force limit {BRUTE_FORCE_LIMIT}"));
    };
    let mut labels = vec![0usize; n];
    let mut best: Option<(Vec<usize>, f64)> = None;
    for code in 0..total {
        let mut c = code;
        for l in labels.iter_mut() {
            *l = (c % k as u64) as usize;
            c /= k as u64;
        }
        let (mu, counts) = member_means(features, &labels, k);
        if counts.contains(&0) {
            continue;
        }
        let d = features.cols;
        let inertia: f64 = features
            .rows_iter()
            .zip(&labels)
            .map(|(r, &l)| sq_dist(r, &mu[l * d..(l + 1) * d]))
            .sum();
        if best.as_ref().is_none_or(|b| inertia < b.1) {
            best = Some((labels.clone(), inertia));
        }
    }
    let (assignments, inertia) = best.expect("n >= k admits a partition");
    let (centroids, stds) = compute_cluster_stats(features, &assignments, k)?;
    Ok(ClusterModel { k, dim: features.cols, centroids, stds, assignments, inertia })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[f64]) -> FeatureMatrix {
        FeatureMatrix::new(points.len(), 1, points.to_vec()).unwrap()
    }

    #[test]
    fn four_point_line() {
        let m = kmeans_fit(&line(&[0.0, 1.0, 10.0, 11.0]), 2, &ClusteringOptions::default()).unwrap();
        let mut c = m.centroids.clone();
        c.sort_by(f64::total_cmp);
        assert_eq!(c, vec![0.5, 10.5]);
        assert_eq!(m.inertia, 1.0);
        assert_eq!(brute_force_kmeans(&line(&[0.0, 1.0, 10.0, 11.0]), 2).unwrap().inertia, 1.0);
    }

    #[test]
    fn n_equals_k() {
        let f = line(&[3.0, -1.0, 7.0]);
        assert_eq!(kmeans_fit(&f, 3, &ClusteringOptions::default()).unwrap().inertia, 0.0);
        assert_eq!(brute_force_kmeans(&f, 3).unwrap().inertia, 0.0);
    }

    #[test]
    fn bad_k() {
        let f = line(&[0.0, 1.0]);
        assert!(kmeans_fit(&f, 0, &ClusteringOptions::default()).is_err());
        assert!(kmeans_fit(&f, 3, &ClusteringOptions::default()).is_err());
    }

    #[test]
    fn tie_goes_to_lowest_index() {
        let model = ClusterModel {
            k: 3,
            dim: 1,
            centroids: vec![-1.0, 5.0, 1.0],
            stds: vec![SIGMA_FLOOR; 3],
            assignments: vec![],
            inertia: 0.0,
        };
        assert_eq!(assign_clusters(&model, &line(&[0.0, 5.0])).unwrap(), vec![0, 1]);
    }

    #[test]
    fn stats_examples() {
        let f = FeatureMatrix::from_rows(&[vec![0.0, 0.0], vec![2.0, 2.0], vec![4.0, 4.0], vec![4.0, 4.0]]).unwrap();
        let (mu, sigma) = compute_cluster_stats(&f, &[0, 0, 1, 2], 3).unwrap();
        assert_eq!(&mu[..2], &[1.0, 1.0]);
        assert_eq!(&sigma[..2], &[1.0, 1.0]);
        assert_eq!(&sigma[2..], &[SIGMA_FLOOR; 4]);
        assert_eq!(&mu[4..], &[4.0, 4.0]);
        assert!(matches!(compute_cluster_stats(&f, &[0, 0, 0, 2], 3), Err(XploreError::EmptyCluster(1))));
    }

    #[test]
    fn brute_force_guard() {
        let nine = line(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        assert!(brute_force_kmeans(&nine, 3).is_ok());
        let twenty = line(&(0..20).map(f64::from).collect::<Vec<_>>());
        assert!(brute_force_kmeans(&twenty, 4).is_err());
    }
}
