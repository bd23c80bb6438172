//! Feature matrices and the built-in pooled-pixel extractor.

use crate::data::images::ImageSet;
use crate::error::{invalid, Result, XploreError};

/// `rows × cols` row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub normalized: bool,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows * cols != values.len() {
            return invalid(format!("{rows}x{cols} matrix needs {} values, got {}", rows * cols, values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(XploreError::NonFinite(format!("feature value {i}")));
        }
        Ok(Self { rows, cols, values, normalized: false })
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != cols) {
            return Err(XploreError::DimensionMismatch { expected: cols, found: r.len() });
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.cols.max(1)).take(self.rows)
    }
}

/// Per-channel global means followed by an average-pooled pixel grid
/// (channel-major), so `d = c + c·(h/f)·(w/f)`.
pub fn extract_trivial_features(images: &ImageSet, factor: usize) -> Result<FeatureMatrix> {
    if factor == 0 || !images.height.is_multiple_of(factor) || !images.width.is_multiple_of(factor) {
        return invalid(format!(
            "downsample factor {factor} does not divide {}x{}",
            images.height, images.width
        ));
    }
    let (c, h, w) = (images.channels, images.height, images.width);
    let (gh, gw) = (h / factor, w / factor);
    let d = c + c * gh * gw;
    let cell = (factor * factor) as f64;
    let mut values = Vec::with_capacity(images.count * d);
    for i in 0..images.count {
        let img = images.image(i);
        values.extend(images.channel_means(i));
        for ch in 0..c {
            let plane = &img[ch * h * w..(ch + 1) * h * w];
            for gy in 0..gh {
                for gx in 0..gw {
                    let mut s = 0.0;
                    for y in gy * factor..(gy + 1) * factor {
                        for x in gx * factor..(gx + 1) * factor {
                            s += plane[y * w + x] as f64;
                        }
                    }
                    values.push(s / cell);
                }
            }
        }
    }
    FeatureMatrix::new(images.count, d, values)
}

/// Scales every row to unit Euclidean norm.
pub fn l2_normalize_rows(features: &FeatureMatrix) -> Result<FeatureMatrix> {
    let mut values = Vec::with_capacity(features.values.len());
    for (i, row) in features.rows_iter().enumerate() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(XploreError::ZeroRow(i));
        }
        values.extend(row.iter().map(|v| v / norm));
    }
    Ok(FeatureMatrix { rows: features.rows, cols: features.cols, values, normalized: true })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_features() {
        let img = ImageSet::new(1, 3, 16, 16, vec![0.5; 3 * 256], None).unwrap();
        let f = extract_trivial_features(&img, 16).unwrap();
        assert_eq!(f.values, vec![0.5; 6]);
    }

    #[test]
    fn red_change_is_local() {
        let mut px = vec![0.0f32; 3 * 64];
        let a = ImageSet::new(1, 3, 8, 8, px.clone(), None).unwrap();
        px[..64].fill(0.4);
        let b = ImageSet::new(1, 3, 8, 8, px, None).unwrap();
        let (fa, fb) = (extract_trivial_features(&a, 8).unwrap(), extract_trivial_features(&b, 8).unwrap());
        let diff: Vec<usize> = (0..6).filter(|&j| fa.values[j] != fb.values[j]).collect();
        assert_eq!(diff, vec![0, 3]);
    }

    #[test]
    fn non_dividing_factor() {
        let img = ImageSet::new(1, 1, 16, 16, vec![0.0; 256], None).unwrap();
        assert!(extract_trivial_features(&img, 3).is_err());
        assert!(extract_trivial_features(&img, 0).is_err());
    }

    #[test]
    fn three_four_five() {
        let f = FeatureMatrix::new(1, 2, vec![3.0, 4.0]).unwrap();
        let n = l2_normalize_rows(&f).unwrap();
        assert_eq!(n.values, vec![0.6, 0.8]);
        assert!(n.normalized);
    }

    #[test]
    fn zero_row_is_named() {
        let f = FeatureMatrix::new(2, 2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert!(matches!(l2_normalize_rows(&f), Err(XploreError::ZeroRow(0))));
    }
}
