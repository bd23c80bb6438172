//! Adam with bias correction over single-precision parameter buffers.
//!
//! Arithmetic runs in double precision; parameters and moments are stored
//! as `f32` so a saved state reproduces training exactly.

use crate::error::{shape_err, Result, TensorError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
}

impl AdamState {
    pub fn new(sizes: impl IntoIterator<Item = usize>) -> Self {
        let sizes: Vec<usize> = sizes.into_iter().collect();
        Self {
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }
}

/// One Adam step over every parameter buffer.
///
/// Rejects non-finite gradients before touching any state.
pub fn adam_update(
    params: &mut [Vec<f32>],
    grads: &[Vec<f64>],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() || params.len() != state.v.len() {
        return shape_err(
            "adam_update",
            format!("{} params, {} grads, {} moment slots", params.len(), grads.len(), state.m.len()),
        );
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || p.len() != state.m[i].len() || p.len() != state.v[i].len() {
            return shape_err("adam_update", format!("buffer {i}: param {} vs grad {}", p.len(), g.len()));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite(format!("gradient buffer {i}")));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for j in 0..p.len() {
            let mj = cfg.beta1 * m[j] as f64 + (1.0 - cfg.beta1) * g[j];
            let vj = cfg.beta2 * v[j] as f64 + (1.0 - cfg.beta2) * g[j] * g[j];
            m[j] = mj as f32;
            v[j] = vj as f32;
            let m_hat = m[j] as f64 / bc1;
            let v_hat = v[j] as f64 / bc2;
            p[j] = (p[j] as f64 - cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps)) as f32;
        }
    }
    Ok(())
}
