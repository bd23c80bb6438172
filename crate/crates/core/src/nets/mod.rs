//! Generator and PatchGAN discriminator.

pub mod discriminator;
pub mod generator;
pub mod spectral;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use discriminator::{build_discriminator, discriminator_forward, DiscriminatorBundle};
pub use generator::{build_generator, generator_forward, GenCondition, GeneratorBundle, NoiseMode};
pub use spectral::{power_iteration, sn_weight, spectral_normalize};

/// How decoder residual blocks are normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecoderNorm {
    /// Affine parameters from the conditioning perceptron.
    Asin,
    /// Affine parameters from a style image's encoder features.
    Adain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub channels: usize,
    pub image_size: usize,
    pub base_width: usize,
    pub n_down: usize,
    pub n_res_enc: usize,
    pub n_res_dec: usize,
    /// Number of clusters (length of the classification head).
    pub k: usize,
    /// Length of the condition vector fed to the perceptron.
    pub cond_dim: usize,
    pub mlp_depth: usize,
    pub mlp_hidden: usize,
    pub noise_init: f32,
    pub spectral_iters: usize,
    /// Stride-2 convolutions in the discriminator.
    pub d_layers: usize,
    pub decoder_norm: DecoderNorm,
}

impl NetConfig {
    /// 16×16 images, base width 16, six residual blocks on each side.
    pub fn desk(k: usize, cond_dim: usize) -> Self {
        Self {
            channels: 3,
            image_size: 16,
            base_width: 16,
            n_down: 2,
            n_res_enc: 6,
            n_res_dec: 6,
            k,
            cond_dim,
            mlp_depth: 7,
            mlp_hidden: 256,
            noise_init: 0.0,
            spectral_iters: 1,
            d_layers: 3,
            decoder_norm: DecoderNorm::Asin,
        }
    }

    /// 256×256 images with base width 64.
    pub fn paper(k: usize, cond_dim: usize) -> Self {
        Self { image_size: 256, base_width: 64, d_layers: 6, ..Self::desk(k, cond_dim) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.base_width == 0 || self.image_size == 0 {
            return invalid("channels, base width and image size must be positive");
        }
        if self.n_down == 0 || !self.image_size.is_multiple_of(1 << self.n_down) {
            return invalid(format!("image size {} not divisible by 2^{}", self.image_size, self.n_down));
        }
        if self.image_size >> self.n_down < 2 {
            return invalid("bottleneck must keep at least 2x2 spatial positions for normalization");
        }
        if self.d_layers == 0 || !self.image_size.is_multiple_of(1 << self.d_layers) {
            return invalid(format!("image size {} not divisible by 2^{} discriminator layers", self.image_size, self.d_layers));
        }
        if self.k == 0 || self.cond_dim == 0 || self.mlp_depth == 0 || self.mlp_hidden == 0 {
            return invalid("k, cond_dim, mlp_depth and mlp_hidden must be positive");
        }
        if self.spectral_iters == 0 {
            return invalid("spectral_iters must be at least 1");
        }
        if !self.noise_init.is_finite() {
            return invalid("noise_init must be finite");
        }
        Ok(())
    }

    pub fn width(&self, level: usize) -> usize {
        self.base_width << level
    }

    pub fn bottleneck(&self) -> usize {
        self.width(self.n_down)
    }

    /// Channel count of every perceptron-driven normalization site.
    pub fn asin_sites(&self) -> Vec<usize> {
        vec![self.bottleneck(); 2 * self.n_res_dec]
    }
}
