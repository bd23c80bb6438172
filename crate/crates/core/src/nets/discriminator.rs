//! PatchGAN critic with a real/fake patch map and a cluster classifier.

use xplore_tensor::{nn, no_grad, Tensor};

use crate::error::{invalid, Result};
use crate::nets::NetConfig;
use crate::params::{Bound, Init, ParamStore};

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorBundle {
    pub cfg: NetConfig,
    pub params: ParamStore,
}

/// Strided 4×4 convolutions with leaky ReLU, no normalization layers.
pub fn build_discriminator(cfg: &NetConfig, seed: u64) -> Result<DiscriminatorBundle> {
    cfg.validate()?;
    let mut init = Init::new(seed);
    let mut p = ParamStore::new();
    let mut cin = cfg.channels;
    for i in 0..cfg.d_layers {
        let co = cfg.width(i);
        p.insert(format!("d.conv{i}.w"), &[co, cin, 4, 4], init.he(co * cin * 16, cin * 16))?;
        p.insert(format!("d.conv{i}.b"), &[co], vec![0.0; co])?;
        cin = co;
    }
    p.insert("d.adv.w", &[1, cin, 3, 3], init.he(cin * 9, cin * 9))?;
    p.insert("d.cls.w", &[cfg.k, cin], init.he(cfg.k * cin, cin))?;
    p.insert("d.cls.b", &[cfg.k], vec![0.0; cfg.k])?;
    Ok(DiscriminatorBundle { cfg: cfg.clone(), params: p })
}

/// `(adv_map (N, 1, s, s), cls_logits (N, k))`.
pub fn discriminator_forward(d: &DiscriminatorBundle, p: &Bound, x: &Tensor) -> Result<(Tensor, Tensor)> {
    let cfg = &d.cfg;
    let want = [cfg.channels, cfg.image_size, cfg.image_size];
    if x.ndim() != 4 || x.shape()[1..] != want {
        return invalid(format!("discriminator input {:?}, expected (N, {}, {}, {})", x.shape(), want[0], want[1], want[2]));
    }
    let mut h = x.clone();
    for i in 0..cfg.d_layers {
        let w = p.t(&format!("d.conv{i}.w"))?;
        h = nn::leaky_relu(&nn::conv2d(&h, w, Some(p.t(&format!("d.conv{i}.b"))?), 2, 1)?)?;
    }
    let adv = nn::conv2d(&h, p.t("d.adv.w")?, None, 1, 1)?;
    let cls = nn::dense(&nn::spatial_mean(&h)?, p.t("d.cls.w")?, Some(p.t("d.cls.b")?))?;
    Ok((adv, cls))
}

impl DiscriminatorBundle {
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        no_grad(|| discriminator_forward(self, &self.params.bind(false), x))
    }
}
