//! Classification, cycle, latent and Wasserstein gradient-penalty losses,
//! and their weighted totals for the critic and the generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use xplore_tensor::{grad, nn, ops, Tensor};

use crate::error::{invalid, Result, XploreError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub cls: f64,
    pub rec: f64,
    pub lnt: f64,
    pub gp: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { cls: 1.0, rec: 10.0, lnt: 10.0, gp: 10.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("cls", self.cls), ("rec", self.rec), ("lnt", self.lnt), ("gp", self.gp)] {
            if !(v.is_finite() && v >= 0.0) {
                return invalid(format!("loss weight {name} = {v} must be finite and nonnegative"));
            }
        }
        Ok(())
    }
}

/// Every scalar produced by one training step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    /// `E[D(real)] − E[D(fake)]` from the last critic update.
    pub adv_d: f64,
    pub gp: f64,
    pub cls_real: f64,
    /// `−E[D(fake)]` in the generator update.
    pub adv_g: f64,
    pub cls_fake: f64,
    pub rec: f64,
    pub lnt: f64,
    pub total_d: f64,
    pub total_g: f64,
}

impl LossReport {
    pub const COLUMNS: [&'static str; 9] = ["adv_d", "gp", "cls_real", "adv_g", "cls_fake", "rec", "lnt", "total_d", "total_g"];

    pub fn values(&self) -> [f64; 9] {
        [self.adv_d, self.gp, self.cls_real, self.adv_g, self.cls_fake, self.rec, self.lnt, self.total_d, self.total_g]
    }

    pub fn from_values(v: [f64; 9]) -> Self {
        let [adv_d, gp, cls_real, adv_g, cls_fake, rec, lnt, total_d, total_g] = v;
        Self { adv_d, gp, cls_real, adv_g, cls_fake, rec, lnt, total_d, total_g }
    }

    /// First non-finite component, if any.
    pub fn non_finite(&self) -> Option<&'static str> {
        Self::COLUMNS.iter().zip(self.values()).find(|(_, v)| !v.is_finite()).map(|(n, _)| *n)
    }
}

/// Mean cross-entropy of real images against their pseudo-labels.
pub fn cls_loss_real(logits: &Tensor, k_true: &[usize]) -> Result<Tensor> {
    Ok(nn::softmax_xent(logits, k_true)?)
}

/// Mean cross-entropy of translated images against their target clusters.
pub fn cls_loss_fake(logits: &Tensor, k_target: &[usize]) -> Result<Tensor> {
    Ok(nn::softmax_xent(logits, k_target)?)
}

/// Mean absolute difference between inputs and their round trips.
pub fn cycle_reconstruction_loss(x: &Tensor, x_cycled: &Tensor) -> Result<Tensor> {
    if x.shape() != x_cycled.shape() {
        return invalid(format!("cycle loss shapes {:?} vs {:?}", x.shape(), x_cycled.shape()));
    }
    Ok(nn::l1_mean(x, x_cycled)?)
}

/// Batch mean of the (unsquared) Euclidean distance between encoder features.
pub fn latent_loss(h_x: &Tensor, h_fake: &Tensor) -> Result<Tensor> {
    if h_x.shape() != h_fake.shape() {
        return invalid(format!("latent loss shapes {:?} vs {:?}", h_x.shape(), h_fake.shape()));
    }
    Ok(nn::l2_norm_mean(&ops::sub(h_x, h_fake)?)?)
}

/// Critic value: the mean of the patch map.
pub fn critic_mean(adv_map: &Tensor) -> Result<Tensor> {
    if !adv_map.all_finite() {
        return Err(XploreError::NonFinite("critic output".into()));
    }
    Ok(nn::mean(adv_map)?)
}

/// Per-sample critic values `(N)` from a patch map `(N, ...)`.
fn per_sample(adv_map: &Tensor) -> Result<Tensor> {
    let n = adv_map.shape()[0];
    let per = adv_map.numel() / n;
    let flat = ops::reshape(adv_map, &[n, per])?;
    Ok(ops::mul_scalar(&ops::sum_axis(&flat, 1)?, 1.0 / per as f64))
}

/// Interpolation weights, one per sample, uniform on `[0, 1)`.
pub fn interpolation_weights(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random::<f64>()).collect()
}

/// `E[(‖∇ D(x̂)‖₂ − 1)²]` on random interpolates of `real` and `fake`.
///
/// The returned tensor keeps the graph of the gradient, so it can be
/// differentiated with respect to the critic's parameters.
pub fn gradient_penalty<F>(critic: F, real: &Tensor, fake: &Tensor, seed: u64) -> Result<Tensor>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    if real.shape() != fake.shape() || real.ndim() == 0 {
        return invalid(format!("penalty shapes {:?} vs {:?}", real.shape(), fake.shape()));
    }
    let u = interpolation_weights(real.shape()[0], seed);
    let mut x_hat = nn::interpolate_pair(real, fake, &u)?;
    if !x_hat.is_tracked() {
        x_hat = x_hat.requires_grad();
    }
    let map = critic(&x_hat)?;
    if !map.all_finite() {
        return Err(XploreError::NonFinite("critic output on interpolates".into()));
    }
    let total = ops::sum_all(&per_sample(&map)?)?;
    let g = grad(&total, &[&x_hat], true)?.remove(0);
    let dev = ops::add_scalar(&ops::row_norms(&g)?, -1.0);
    Ok(nn::mean(&ops::mul(&dev, &dev)?)?)
}

pub struct AdversarialTerms {
    /// `E[D(real)] − E[D(fake)]`.
    pub adv_value: Tensor,
    pub gp_value: Tensor,
    /// `−adv_value + λ_gp · gp`, minimized by the critic.
    pub d_loss_part: Tensor,
    /// `−E[D(fake)]`, minimized by the generator.
    pub g_loss_part: Tensor,
}

pub fn adversarial_losses<F>(critic: F, real: &Tensor, fake: &Tensor, lambda_gp: f64, seed: u64) -> Result<AdversarialTerms>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    let d_real = critic_mean(&critic(real)?)?;
    let d_fake = critic_mean(&critic(fake)?)?;
    let adv_value = ops::sub(&d_real, &d_fake)?;
    let gp_value = gradient_penalty(&critic, &real.detach(), &fake.detach(), seed)?;
    let d_loss_part = ops::add(&ops::mul_scalar(&adv_value, -1.0), &ops::mul_scalar(&gp_value, lambda_gp))?;
    let g_loss_part = ops::mul_scalar(&d_fake, -1.0);
    Ok(AdversarialTerms { adv_value, gp_value, d_loss_part, g_loss_part })
}

/// `−adv + λ_gp·gp + λ_cls·cls_real`.
pub fn d_objective(adv: &Tensor, gp: &Tensor, cls_real: &Tensor, w: &LossWeights) -> Result<Tensor> {
    let t = ops::add(&ops::mul_scalar(adv, -1.0), &ops::mul_scalar(gp, w.gp))?;
    Ok(ops::add(&t, &ops::mul_scalar(cls_real, w.cls))?)
}

/// `adv_g + λ_cls·cls_fake + λ_rec·rec + λ_lnt·lnt`, where `adv_g = −E[D(fake)]`.
pub fn g_objective(adv_g: &Tensor, cls_fake: &Tensor, rec: &Tensor, lnt: &Tensor, w: &LossWeights) -> Result<Tensor> {
    let t = ops::add(adv_g, &ops::mul_scalar(cls_fake, w.cls))?;
    let t = ops::add(&t, &ops::mul_scalar(rec, w.rec))?;
    Ok(ops::add(&t, &ops::mul_scalar(lnt, w.lnt))?)
}

/// `(L_D, L_G)` from a report's components.
pub fn total_objectives(r: &LossReport, w: &LossWeights) -> (f64, f64) {
    let l_d = -r.adv_d + w.gp * r.gp + w.cls * r.cls_real;
    let l_g = r.adv_g + w.cls * r.cls_fake + w.rec * r.rec + w.lnt * r.lnt;
    (l_d, l_g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let w = LossWeights::default();
        assert_eq!((w.cls, w.rec, w.lnt, w.gp), (1.0, 10.0, 10.0, 10.0));
    }

    #[test]
    fn composition_example() {
        let r = LossReport { adv_d: 1.0, gp: 0.1, cls_real: 0.5, ..Default::default() };
        let (l_d, _) = total_objectives(&r, &LossWeights::default());
        assert!((l_d - 0.5).abs() < 1e-12);
        assert_eq!(total_objectives(&LossReport::default(), &LossWeights::default()), (0.0, 0.0));
    }
}
