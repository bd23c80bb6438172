//! Agreement between a predicted partition and ground truth.

use std::collections::BTreeMap;

use crate::error::{Result, XploreError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusteringMetrics {
    pub nmi: f64,
    pub ari: f64,
}

fn choose2(n: usize) -> f64 {
    (n as f64) * (n as f64 - 1.0) / 2.0
}

/// NMI (arithmetic-mean normalization) and adjusted Rand index.
pub fn clustering_metrics(pred: &[usize], truth: &[usize]) -> Result<ClusteringMetrics> {
    if pred.len() != truth.len() {
        return Err(XploreError::DimensionMismatch { expected: truth.len(), found: pred.len() });
    }
    let n = pred.len();
    if n == 0 {
        return Err(XploreError::InvalidArgument("empty labelings".into()));
    }
    let mut table: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut rows: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cols: BTreeMap<usize, usize> = BTreeMap::new();
    for (&p, &t) in pred.iter().zip(truth) {
        *table.entry((p, t)).or_default() += 1;
        *rows.entry(p).or_default() += 1;
        *cols.entry(t).or_default() += 1;
    }
    let nf = n as f64;
    let entropy = |m: &BTreeMap<usize, usize>| -> f64 {
        m.values().map(|&c| c as f64 / nf).map(|p| -p * p.ln()).sum()
    };
    let (hp, ht) = (entropy(&rows), entropy(&cols));
    let mi: f64 = table
        .iter()
        .map(|(&(p, t), &c)| {
            let pij = c as f64 / nf;
            pij * (pij * nf * nf / (rows[&p] as f64 * cols[&t] as f64)).ln()
        })
        .sum();
    let nmi = if hp + ht == 0.0 { 1.0 } else { (2.0 * mi / (hp + ht)).clamp(0.0, 1.0) };

    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let a: f64 = rows.values().map(|&c| choose2(c)).sum();
    let b: f64 = cols.values().map(|&c| choose2(c)).sum();
    let expected = if n > 1 { a * b / choose2(n) } else { 0.0 };
    let max = (a + b) / 2.0;
    let ari = if max == expected { 1.0 } else { (index - expected) / (max - expected) };
    Ok(ClusteringMetrics { nmi, ari })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_and_permuted() {
        let t = [0, 0, 1, 1, 2, 2];
        let m = clustering_metrics(&t, &t).unwrap();
        assert!((m.nmi - 1.0).abs() < 1e-12 && (m.ari - 1.0).abs() < 1e-12);
        let p = [2, 2, 0, 0, 1, 1];
        let m = clustering_metrics(&p, &t).unwrap();
        assert!((m.nmi - 1.0).abs() < 1e-12 && (m.ari - 1.0).abs() < 1e-12);
    }

    #[test]
    fn independent_split() {
        let m = clustering_metrics(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap();
        assert!(m.nmi.abs() < 1e-12);
        assert!((m.ari + 0.5).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch() {
        assert!(clustering_metrics(&[0, 1], &[0]).is_err());
    }
}
