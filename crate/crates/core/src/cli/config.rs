//! TOML pipeline configuration.
//!
//! Every section is optional. Command-line flags override the file, and
//! `XPLORE_SEED` overrides the file's `seed`.
//!
//! ```toml
//! seed = 1
//!
//! [paths]
//! images = "data/images.xim"
//! features = "data/features.xfv"
//! clusters = "data/clusters.xcm"
//! checkpoint = "run/final.xck"
//! out_dir = "run"
//!
//! [synth]
//! spec = "6x100"
//! size = 16
//!
//! [features]
//! factor = 4
//! pca_dim = 16
//!
//! [clustering]
//! k = 6
//! init = "k-means-plus-plus"
//! restarts = 20
//!
//! [net]
//! base_width = 16
//! decoder_norm = "asin"
//!
//! [train]
//! preset = "desk"
//! steps = 500
//! lr = 5e-4
//! mode = "mu-sigma"
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::cluster::{ClusteringOptions, Init};
use crate::error::{Result, XploreError};
use crate::nets::{DecoderNorm, NetConfig};
use crate::norm::ConditionMode;
use crate::train::{Preset, TrainConfig};

pub const SEED_ENV: &str = "XPLORE_SEED";

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    pub paths: PathsSection,
    pub synth: SynthSection,
    pub features: FeaturesSection,
    pub clustering: ClusteringSection,
    pub net: NetSection,
    pub train: TrainSection,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub images: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub clusters: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub spec: Option<String>,
    pub size: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturesSection {
    pub factor: Option<usize>,
    pub pca_dim: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusteringSection {
    pub k: Option<usize>,
    pub init: Option<Init>,
    pub restarts: Option<usize>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetSection {
    pub base_width: Option<usize>,
    pub n_down: Option<usize>,
    pub n_res_enc: Option<usize>,
    pub n_res_dec: Option<usize>,
    pub mlp_depth: Option<usize>,
    pub mlp_hidden: Option<usize>,
    pub noise_init: Option<f32>,
    pub spectral_iters: Option<usize>,
    pub d_layers: Option<usize>,
    pub decoder_norm: Option<DecoderNorm>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub preset: Option<Preset>,
    pub batch: Option<usize>,
    pub steps: Option<u64>,
    pub n_critic: Option<usize>,
    pub lr: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub lambda_cls: Option<f64>,
    pub lambda_rec: Option<f64>,
    pub lambda_lnt: Option<f64>,
    pub lambda_gp: Option<f64>,
    pub mode: Option<ConditionMode>,
    pub checkpoint_every: Option<u64>,
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| XploreError::Config(e.to_string()))
    }

    /// Reads and validates a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| XploreError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in cfg.paths.all_mut().into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Input paths must exist; the output directory's parent must exist.
    pub fn validate(&self) -> Result<()> {
        let p = &self.paths;
        let inputs = [("images", &p.images), ("features", &p.features), ("clusters", &p.clusters), ("checkpoint", &p.checkpoint)];
        for (key, path) in inputs {
            if let Some(path) = path {
                if !path.exists() && !self.produced_by_pipeline(key) {
                    return Err(XploreError::Config(format!("paths.{key}: {} does not exist", path.display())));
                }
            }
        }
        if let Some(dir) = &p.out_dir {
            let parent = dir.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
            if !parent.exists() {
                return Err(XploreError::Config(format!("paths.out_dir: parent of {} does not exist", dir.display())));
            }
        }
        if self.clustering.k == Some(0) {
            return Err(XploreError::Config("clustering.k must be positive".into()));
        }
        Ok(())
    }

    /// A stage's output may not exist yet when an earlier stage will write it.
    fn produced_by_pipeline(&self, key: &str) -> bool {
        match key {
            "images" => self.synth.spec.is_some(),
            "features" => self.paths.images.is_some(),
            "clusters" => self.paths.features.is_some(),
            "checkpoint" => self.paths.out_dir.is_some(),
            _ => false,
        }
    }

    /// `XPLORE_SEED` if set, else the file's seed.
    pub fn effective_seed(&self) -> Result<Option<u64>> {
        match std::env::var(SEED_ENV) {
            Ok(s) => s
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| XploreError::Config(format!("{SEED_ENV}={s:?} is not an unsigned integer"))),
            Err(_) => Ok(self.seed),
        }
    }

    pub fn clustering_options(&self, seed: u64) -> ClusteringOptions {
        let c = &self.clustering;
        let d = ClusteringOptions::default();
        ClusteringOptions {
            init: c.init.unwrap_or(d.init),
            restarts: c.restarts.unwrap_or(d.restarts),
            max_iters: c.max_iters.unwrap_or(d.max_iters),
            tol: c.tol.unwrap_or(d.tol),
            seed,
        }
    }

    pub fn train_config(&self, preset: Preset) -> TrainConfig {
        let t = &self.train;
        let mut cfg = match t.preset.unwrap_or(preset) {
            Preset::Desk => TrainConfig::desk(),
            Preset::Paper => TrainConfig::paper(TrainConfig::desk().steps),
        };
        set(&mut cfg.batch, t.batch);
        set(&mut cfg.steps, t.steps);
        set(&mut cfg.n_critic, t.n_critic);
        set(&mut cfg.adam.lr, t.lr);
        set(&mut cfg.adam.beta1, t.beta1);
        set(&mut cfg.adam.beta2, t.beta2);
        set(&mut cfg.weights.cls, t.lambda_cls);
        set(&mut cfg.weights.rec, t.lambda_rec);
        set(&mut cfg.weights.lnt, t.lambda_lnt);
        set(&mut cfg.weights.gp, t.lambda_gp);
        set(&mut cfg.mode, t.mode);
        set(&mut cfg.checkpoint_every, t.checkpoint_every);
        cfg
    }

    /// Network for square `image_size` inputs with `k` clusters.
    pub fn net_config(&self, preset: Preset, channels: usize, image_size: usize, k: usize, cond_dim: usize) -> NetConfig {
        let n = &self.net;
        let mut cfg = match preset {
            Preset::Desk => NetConfig::desk(k, cond_dim),
            Preset::Paper => NetConfig::paper(k, cond_dim),
        };
        cfg.channels = channels;
        cfg.image_size = image_size;
        set(&mut cfg.base_width, n.base_width);
        set(&mut cfg.n_down, n.n_down);
        set(&mut cfg.n_res_enc, n.n_res_enc);
        set(&mut cfg.n_res_dec, n.n_res_dec);
        set(&mut cfg.mlp_depth, n.mlp_depth);
        set(&mut cfg.mlp_hidden, n.mlp_hidden);
        set(&mut cfg.noise_init, n.noise_init);
        set(&mut cfg.spectral_iters, n.spectral_iters);
        set(&mut cfg.d_layers, n.d_layers);
        set(&mut cfg.decoder_norm, n.decoder_norm);
        cfg
    }
}

impl PathsSection {
    fn all_mut(&mut self) -> [&mut Option<PathBuf>; 5] {
        [&mut self.images, &mut self.features, &mut self.clusters, &mut self.checkpoint, &mut self.out_dir]
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}
