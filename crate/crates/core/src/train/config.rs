use serde::{Deserialize, Serialize};
use xplore_tensor::AdamConfig;

use crate::error::{invalid, Result};
use crate::losses::LossWeights;
use crate::norm::ConditionMode;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        let c = AdamConfig::default();
        Self { lr: c.lr, beta1: c.beta1, beta2: c.beta2, eps: c.eps }
    }
}

impl From<AdamHyper> for AdamConfig {
    fn from(h: AdamHyper) -> Self {
        AdamConfig { lr: h.lr, beta1: h.beta1, beta2: h.beta2, eps: h.eps }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Desk,
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub batch: usize,
    pub steps: u64,
    /// Critic updates per generator update.
    pub n_critic: usize,
    pub weights: LossWeights,
    pub adam: AdamHyper,
    pub mode: ConditionMode,
    pub seed: u64,
    /// Write a checkpoint every this many steps; 0 writes only the final one.
    pub checkpoint_every: u64,
    pub preset: Preset,
}

impl TrainConfig {
    /// CPU-sized runs: batch 8, at most 2000 steps.
    pub fn desk() -> Self {
        Self {
            batch: 8,
            steps: 2000,
            n_critic: 5,
            weights: LossWeights::default(),
            adam: AdamHyper { lr: 5e-4, ..AdamHyper::default() },
            mode: ConditionMode::MuSigma,
            seed: 0,
            checkpoint_every: 0,
            preset: Preset::Desk,
        }
    }

    /// Batch 32 and learning rate 1e-4; step count left to the caller.
    pub fn paper(steps: u64) -> Self {
        Self { batch: 32, steps, adam: AdamHyper::default(), preset: Preset::Paper, ..Self::desk() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch < 2 {
            return invalid(format!("batch {} < 2", self.batch));
        }
        if self.n_critic == 0 {
            return invalid("n_critic must be at least 1");
        }
        self.weights.validate()?;
        let a = self.adam;
        if !(a.lr >= 0.0 && a.lr.is_finite() && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return invalid(format!("bad Adam hyperparameters {a:?}"));
        }
        Ok(())
    }
}
