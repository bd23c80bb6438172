//! Spectral normalization by persistent power iteration.

use std::rc::Rc;

use xplore_tensor::{ops, Tensor};

use crate::error::{invalid, Result};

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Runs `iters` rounds of power iteration on the `rows × cols` matrix `w`
/// starting from `u`, returning `(u, v, σ)` with `σ = uᵀ W v`.
pub fn power_iteration(w: &[f64], rows: usize, cols: usize, iters: usize, u: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
    let mut u = u.to_vec();
    let mut v = vec![0.0; cols];
    for _ in 0..iters {
        v.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..rows {
            for j in 0..cols {
                v[j] += w[i * cols + j] * u[i];
            }
        }
        normalize(&mut v);
        for i in 0..rows {
            u[i] = (0..cols).map(|j| w[i * cols + j] * v[j]).sum();
        }
        normalize(&mut u);
    }
    let sigma = (0..rows)
        .map(|i| u[i] * (0..cols).map(|j| w[i * cols + j] * v[j]).sum::<f64>())
        .sum();
    (u, v, sigma)
}

/// Divides `weight` (`rows × cols`, kernels flattened as out × rest) by its
/// estimated largest singular value, advancing the persistent vector `u`.
///
/// A zero weight is returned unchanged.
pub fn spectral_normalize(weight: &[f64], rows: usize, cols: usize, iters: usize, u: &mut Vec<f64>) -> Result<Vec<f64>> {
    if iters == 0 {
        return invalid("power iterations must be at least 1");
    }
    if weight.len() != rows * cols || u.len() != rows {
        return invalid(format!("weight {} / u {} for {rows}x{cols}", weight.len(), u.len()));
    }
    if weight.iter().all(|&x| x == 0.0) {
        log::warn!("spectral normalization of a zero weight; leaving it unchanged");
        return Ok(weight.to_vec());
    }
    let (nu, _, sigma) = power_iteration(weight, rows, cols, iters, u);
    *u = nu;
    Ok(weight.iter().map(|x| x / sigma).collect())
}

/// `W / (uᵀ W v)` with `u`, `v` held constant, differentiable in `W`.
pub fn sn_weight(w: &Tensor, u: &[f64], v: &[f64]) -> Result<Tensor> {
    let rows = w.shape()[0];
    let cols = w.numel() / rows.max(1);
    if u.len() != rows || v.len() != cols {
        return invalid(format!("sn vectors {}/{} for weight {:?}", u.len(), v.len(), w.shape()));
    }
    let outer: Vec<f64> = u.iter().flat_map(|&a| v.iter().map(move |&b| a * b)).collect();
    let sigma = ops::sum_all(&ops::mul_const(w, Rc::new(outer))?)?;
    if sigma.item() == 0.0 {
        return Ok(w.clone());
    }
    let inv = ops::reshape(&ops::recip(&sigma), &[1])?;
    let spread = ops::reshape(&ops::broadcast_axis(&inv, 0, w.numel())?, w.shape())?;
    Ok(ops::mul(w, &spread)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diag_three_one() {
        let mut u = vec![0.6, 0.8];
        let out = spectral_normalize(&[3.0, 0.0, 0.0, 1.0], 2, 2, 50, &mut u).unwrap();
        let want = [1.0, 0.0, 0.0, 1.0 / 3.0];
        for (a, b) in out.iter().zip(want) {
            assert!((a - b).abs() < 1e-9, "{out:?}");
        }
    }

    #[test]
    fn identity_and_zero() {
        let mut u = vec![1.0, 0.0];
        assert_eq!(spectral_normalize(&[1.0, 0.0, 0.0, 1.0], 2, 2, 1, &mut u).unwrap(), vec![1.0, 0.0, 0.0, 1.0]);
        let mut u = vec![1.0, 0.0];
        assert_eq!(spectral_normalize(&[0.0; 4], 2, 2, 3, &mut u).unwrap(), vec![0.0; 4]);
        assert!(spectral_normalize(&[1.0; 4], 2, 2, 0, &mut u).is_err());
    }
}
