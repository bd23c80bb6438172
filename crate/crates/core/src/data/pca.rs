//! Principal component analysis with a fixed sign convention.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::data::features::FeatureMatrix;
use crate::error::{invalid, Result, XploreError};

/// Mean, principal directions and their variances.
///
/// `components` is `d × r` row-major; column `c` is the `c`-th direction.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub dim: usize,
    pub rank: usize,
    pub mean: Vec<f64>,
    pub components: Vec<f64>,
    pub variances: Vec<f64>,
}

impl PcaModel {
    pub fn component(&self, c: usize) -> Vec<f64> {
        (0..self.dim).map(|j| self.components[j * self.rank + c]).collect()
    }
}

/// Clamps a requested rank to `min(n, d)`, warning when it has to.
pub fn effective_rank(requested: usize, features: &FeatureMatrix) -> usize {
    let cap = features.rows.min(features.cols);
    if requested > cap {
        log::warn!("PCA rank {requested} exceeds min(n, d) = {cap}; using {cap}");
        cap
    } else {
        requested
    }
}

/// Fits the top-`r` principal directions of the population (1/n) covariance.
pub fn fit_pca(features: &FeatureMatrix, r: usize) -> Result<PcaModel> {
    let (n, d) = (features.rows, features.cols);
    if r == 0 || r > n.min(d) {
        return invalid(format!("PCA rank {r} outside [1, {}]", n.min(d)));
    }
    let mut mean = vec![0.0; d];
    for row in features.rows_iter() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let centered = DMatrix::from_fn(n, d, |i, j| features.values[i * d + j] - mean[j]);
    let cov = (centered.transpose() * &centered) / n as f64;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut components = vec![0.0; d * r];
    let mut variances = Vec::with_capacity(r);
    for (c, &src) in order.iter().take(r).enumerate() {
        let col = eig.eigenvectors.column(src);
        let mut pivot = 0;
        for j in 1..d {
            if col[j].abs() > col[pivot].abs() {
                pivot = j;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            components[j * r + c] = sign * col[j];
        }
        variances.push(eig.eigenvalues[src].max(0.0));
    }
    Ok(PcaModel { dim: d, rank: r, mean, components, variances })
}

/// Centers and projects rows onto the model's components.
pub fn project_pca(model: &PcaModel, features: &FeatureMatrix) -> Result<FeatureMatrix> {
    if features.cols != model.dim {
        return Err(XploreError::DimensionMismatch { expected: model.dim, found: features.cols });
    }
    let r = model.rank;
    let mut out = vec![0.0; features.rows * r];
    for (i, row) in features.rows_iter().enumerate() {
        let dst = &mut out[i * r..(i + 1) * r];
        for (j, (v, m)) in row.iter().zip(&model.mean).enumerate() {
            let x = v - m;
            for (c, o) in dst.iter_mut().enumerate() {
                *o += x * model.components[j * r + c];
            }
        }
    }
    FeatureMatrix::new(features.rows, r, out)
}

/// Maps projected rows back into the original space.
pub fn reconstruct(model: &PcaModel, projected: &FeatureMatrix) -> Result<FeatureMatrix> {
    if projected.cols != model.rank {
        return Err(XploreError::DimensionMismatch { expected: model.rank, found: projected.cols });
    }
    let (d, r) = (model.dim, model.rank);
    let mut out = Vec::with_capacity(projected.rows * d);
    for row in projected.rows_iter() {
        for j in 0..d {
            let s: f64 = (0..r).map(|c| row[c] * model.components[j * r + c]).sum();
            out.push(model.mean[j] + s);
        }
    }
    FeatureMatrix::new(projected.rows, d, out)
}

/// Mean squared reconstruction error per row.
pub fn reconstruction_error(model: &PcaModel, features: &FeatureMatrix) -> Result<f64> {
    let back = reconstruct(model, &project_pca(model, features)?)?;
    let sq: f64 = features.values.iter().zip(&back.values).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sq / features.rows as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_points() -> FeatureMatrix {
        FeatureMatrix::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 2.0], vec![0.0, -2.0]]).unwrap()
    }

    #[test]
    fn four_point_component() {
        let m = fit_pca(&four_points(), 1).unwrap();
        assert!((m.component(0)[0]).abs() < 1e-12);
        assert!((m.component(0)[1] - 1.0).abs() < 1e-12);
        assert!((m.variances[0] - 2.0).abs() < 1e-12);
        let p = project_pca(&m, &four_points()).unwrap();
        let want = [0.0, 0.0, 2.0, -2.0];
        for (a, b) in p.values.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_bounds() {
        assert!(fit_pca(&four_points(), 0).is_err());
        assert!(fit_pca(&four_points(), 3).is_err());
        assert_eq!(effective_rank(256, &four_points()), 2);
    }

    #[test]
    fn mean_point_projects_to_zero() {
        let m = fit_pca(&four_points(), 2).unwrap();
        let p = project_pca(&m, &FeatureMatrix::new(1, 2, m.mean.clone()).unwrap()).unwrap();
        assert!(p.values.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn dimension_mismatch() {
        let m = fit_pca(&four_points(), 1).unwrap();
        let bad = FeatureMatrix::new(1, 3, vec![0.0; 3]).unwrap();
        assert!(matches!(project_pca(&m, &bad), Err(XploreError::DimensionMismatch { .. })));
    }
}
