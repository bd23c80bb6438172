//! Instance normalization conditioned on cluster summaries, plus AdaIN and
//! plain IN for comparison.
//!
//! The decoder's affine parameters come from a perceptron fed with a
//! cluster's centroid and spread, so every image translated toward cluster
//! `k` receives the same scale and shift regardless of its content.

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use xplore_tensor::{nn, ops, Tensor};

use crate::cluster::ClusterModel;
use crate::error::{invalid, Result, XploreError};
use crate::params::{Bound, Init, ParamStore};

pub const NORM_EPS: f64 = 1e-5;

/// What the conditioning perceptron sees about a cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionMode {
    /// Centroid followed by per-dimension std (`2r` values).
    MuSigma,
    /// Centroid only (`r` values).
    MuOnly,
    /// One-hot cluster id (`k` values).
    LabelEmbed,
}

impl ConditionMode {
    pub fn dim(self, k: usize, r: usize) -> usize {
        match self {
            ConditionMode::MuSigma => 2 * r,
            ConditionMode::MuOnly => r,
            ConditionMode::LabelEmbed => k,
        }
    }
}

impl FromStr for ConditionMode {
    type Err = XploreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mu-sigma" | "mu_sigma" => Ok(Self::MuSigma),
            "mu-only" | "mu_only" => Ok(Self::MuOnly),
            "label-embed" | "label_embed" => Ok(Self::LabelEmbed),
            _ => invalid(format!("unknown conditioning mode {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionVector {
    pub mode: ConditionMode,
    pub values: Vec<f64>,
    pub source_cluster: usize,
}

pub fn build_condition(model: &ClusterModel, cluster: usize, mode: ConditionMode) -> Result<ConditionVector> {
    if cluster >= model.k {
        return Err(XploreError::ClusterOutOfRange { cluster, k: model.k });
    }
    let values = match mode {
        ConditionMode::MuSigma => [model.centroid(cluster), model.std(cluster)].concat(),
        ConditionMode::MuOnly => model.centroid(cluster).to_vec(),
        ConditionMode::LabelEmbed => {
            let mut v = vec![0.0; model.k];
            v[cluster] = 1.0;
            v
        }
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(XploreError::NonFinite(format!("condition for cluster {cluster}")));
    }
    Ok(ConditionVector { mode, values, source_cluster: cluster })
}

/// Condition vectors for every cluster, `k × dim` row-major.
pub fn condition_table(model: &ClusterModel, mode: ConditionMode) -> Result<Vec<f64>> {
    let mut t = Vec::new();
    for j in 0..model.k {
        t.extend(build_condition(model, j, mode)?.values);
    }
    Ok(t)
}

/// Shared dense trunk with one output head per normalization site.
///
/// Each head emits `2·C` values: the scale half then the shift half.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditioningMlp {
    pub cond_dim: usize,
    /// Dense layers on any path from condition to affine output.
    pub depth: usize,
    pub hidden: usize,
    pub site_channels: Vec<usize>,
}

impl ConditioningMlp {
    pub fn new(cond_dim: usize, depth: usize, hidden: usize, site_channels: Vec<usize>) -> Result<Self> {
        if cond_dim == 0 || depth == 0 || hidden == 0 {
            return invalid(format!("mlp sizes must be positive: cond {cond_dim}, depth {depth}, hidden {hidden}"));
        }
        Ok(Self { cond_dim, depth, hidden, site_channels })
    }

    fn trunk_layers(&self) -> usize {
        self.depth - 1
    }

    fn head_in(&self) -> usize {
        if self.trunk_layers() == 0 {
            self.cond_dim
        } else {
            self.hidden
        }
    }

    /// Adds `mlp.*` entries: He-initialized trunk, heads with zero weights
    /// and a bias giving scale 1 and shift 0.
    pub fn init(&self, store: &mut ParamStore, init: &mut Init) -> Result<()> {
        let mut fan_in = self.cond_dim;
        for l in 0..self.trunk_layers() {
            store.insert(format!("mlp.trunk{l}.w"), &[self.hidden, fan_in], init.he(self.hidden * fan_in, fan_in))?;
            store.insert(format!("mlp.trunk{l}.b"), &[self.hidden], vec![0.0; self.hidden])?;
            fan_in = self.hidden;
        }
        for (s, &c) in self.site_channels.iter().enumerate() {
            store.insert(format!("mlp.head{s}.w"), &[2 * c, fan_in], vec![0.0; 2 * c * fan_in])?;
            let bias: Vec<f32> = (0..2 * c).map(|i| if i < c { 1.0 } else { 0.0 }).collect();
            store.insert(format!("mlp.head{s}.b"), &[2 * c], bias)?;
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        let mut fan_in = self.cond_dim;
        for _ in 0..self.trunk_layers() {
            n += self.hidden * fan_in + self.hidden;
            fan_in = self.hidden;
        }
        n + self.site_channels.iter().map(|c| 2 * c * fan_in + 2 * c).sum::<usize>()
    }

    /// Shared hidden representation of `cond: (N, cond_dim)`.
    pub fn trunk(&self, p: &Bound, cond: &Tensor) -> Result<Tensor> {
        if cond.ndim() != 2 || cond.shape()[1] != self.cond_dim {
            return Err(XploreError::DimensionMismatch {
                expected: self.cond_dim,
                found: cond.shape().last().copied().unwrap_or(0),
            });
        }
        if !cond.all_finite() {
            return Err(XploreError::NonFinite("condition".into()));
        }
        let mut h = cond.clone();
        for l in 0..self.trunk_layers() {
            h = nn::relu(&nn::dense(&h, p.t(&format!("mlp.trunk{l}.w"))?, Some(p.t(&format!("mlp.trunk{l}.b"))?))?)?;
        }
        Ok(h)
    }

    /// `(scale, shift)`, each `(N, C)`, for one site from a trunk output.
    pub fn head(&self, p: &Bound, trunk: &Tensor, site: usize) -> Result<(Tensor, Tensor)> {
        let Some(&c) = self.site_channels.get(site) else {
            return invalid(format!("site {site} of {}", self.site_channels.len()));
        };
        debug_assert_eq!(trunk.shape()[1], self.head_in());
        let out = nn::dense(trunk, p.t(&format!("mlp.head{site}.w"))?, Some(p.t(&format!("mlp.head{site}.b"))?))?;
        Ok((ops::narrow(&out, 1, 0, c)?, ops::narrow(&out, 1, c, c)?))
    }

    pub fn affine(&self, p: &Bound, cond: &Tensor, site: usize) -> Result<(Tensor, Tensor)> {
        self.head(p, &self.trunk(p, cond)?, site)
    }
}

/// Normalizes `x` per sample and channel, then applies the perceptron's
/// scale and shift for `cond` (`(N, cond_dim)`).
pub fn asin_apply(x: &Tensor, cond: &Tensor, mlp: &ConditioningMlp, p: &Bound, site: usize, eps: f64) -> Result<Tensor> {
    let (scale, shift) = mlp.affine(p, cond, site)?;
    asin_apply_affine(x, &scale, &shift, eps)
}

/// The normalization half of [`asin_apply`] with precomputed affine parameters.
pub fn asin_apply_affine(x: &Tensor, scale: &Tensor, shift: &Tensor, eps: f64) -> Result<Tensor> {
    Ok(nn::affine_per_channel(&nn::instance_normalize(x, eps)?, scale, shift)?)
}

/// Instance normalization with learned per-channel `gamma` and `beta`.
pub fn in_apply(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
    Ok(nn::affine_per_channel(&nn::instance_normalize(x, eps)?, gamma, beta)?)
}

/// Normalizes `content` and re-scales it with `style`'s per-channel spatial
/// statistics.
pub fn adain_apply(content: &Tensor, style: &Tensor, eps: f64) -> Result<Tensor> {
    let (cs, ss) = (content.shape(), style.shape());
    if cs.len() != 4 || ss.len() != 4 || cs[1] != ss[1] || cs[0] != ss[0] {
        return Err(XploreError::InvalidArgument(format!("adain content {cs:?} vs style {ss:?}")));
    }
    let (mean, std) = nn::instance_stats(style, eps)?;
    Ok(nn::affine_per_channel(&nn::instance_normalize(content, eps)?, &std, &mean)?)
}
