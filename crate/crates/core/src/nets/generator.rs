//! Encoder with spectrally normalized residual blocks, and a decoder whose
//! residual blocks are conditioned through the perceptron.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::rc::Rc;
use xplore_tensor::{nn, no_grad, ops, Tensor};

use crate::error::{invalid, Result, XploreError};
use crate::nets::spectral::{power_iteration, sn_weight};
use crate::nets::{DecoderNorm, NetConfig};
use crate::norm::{adain_apply, asin_apply_affine, in_apply, ConditioningMlp, NORM_EPS};
use crate::params::{Bound, Init, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    Off,
    Seeded(u64),
}

/// What steers the decoder.
pub enum GenCondition<'a> {
    /// `(N, cond_dim)` condition vectors for the perceptron.
    Vector(&'a Tensor),
    /// `(N, C, H, W)` style images whose encoder features drive AdaIN.
    Style(&'a Tensor),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorBundle {
    pub cfg: NetConfig,
    pub mlp: ConditioningMlp,
    pub params: ParamStore,
    /// Power-iteration vectors `<conv>.u` and `<conv>.v` per normalized kernel.
    pub buffers: ParamStore,
}

fn conv_w(store: &mut ParamStore, init: &mut Init, name: &str, shape: [usize; 4], fan_in: usize) -> Result<()> {
    store.insert(name, &shape, init.he(shape.iter().product(), fan_in))
}

fn in_params(store: &mut ParamStore, prefix: &str, c: usize) -> Result<()> {
    store.insert(format!("{prefix}.g"), &[c], vec![1.0; c])?;
    store.insert(format!("{prefix}.b"), &[c], vec![0.0; c])
}

pub fn build_generator(cfg: &NetConfig, seed: u64) -> Result<GeneratorBundle> {
    cfg.validate()?;
    let mut init = Init::new(seed);
    let mut p = ParamStore::new();
    let mut buf = ParamStore::new();
    let (c, b, wb) = (cfg.channels, cfg.base_width, cfg.bottleneck());

    conv_w(&mut p, &mut init, "enc.stem.w", [b, c, 7, 7], c * 49)?;
    in_params(&mut p, "enc.stem.in", b)?;
    for i in 0..cfg.n_down {
        let (ci, co) = (cfg.width(i), cfg.width(i + 1));
        conv_w(&mut p, &mut init, &format!("enc.down{i}.w"), [co, ci, 4, 4], ci * 16)?;
        in_params(&mut p, &format!("enc.down{i}.in"), co)?;
    }
    for j in 0..cfg.n_res_enc {
        for s in 1..=2 {
            let name = format!("enc.res{j}.conv{s}.w");
            conv_w(&mut p, &mut init, &name, [wb, wb, 3, 3], wb * 9)?;
            in_params(&mut p, &format!("enc.res{j}.in{s}"), wb)?;
            buf.insert(format!("{name}.u"), &[wb], init.unit_vector(wb))?;
            buf.insert(format!("{name}.v"), &[wb * 9], init.unit_vector(wb * 9))?;
        }
    }
    for j in 0..cfg.n_res_dec {
        for s in 1..=2 {
            conv_w(&mut p, &mut init, &format!("dec.res{j}.conv{s}.w"), [wb, wb, 3, 3], wb * 9)?;
            p.insert(format!("dec.res{j}.noise{s}"), &[wb], vec![cfg.noise_init; wb])?;
        }
    }
    for i in 0..cfg.n_down {
        let (ci, co) = (cfg.width(cfg.n_down - i), cfg.width(cfg.n_down - i - 1));
        conv_w(&mut p, &mut init, &format!("dec.up{i}.w"), [ci, co, 4, 4], ci * 4)?;
        p.insert(format!("dec.up{i}.noise"), &[co], vec![cfg.noise_init; co])?;
        in_params(&mut p, &format!("dec.up{i}.in"), co)?;
    }
    conv_w(&mut p, &mut init, "dec.out.w", [c, b, 7, 7], b * 49)?;
    p.insert("dec.out.b", &[c], vec![0.0; c])?;

    let mlp = ConditioningMlp::new(cfg.cond_dim, cfg.mlp_depth, cfg.mlp_hidden, cfg.asin_sites())?;
    if cfg.decoder_norm == DecoderNorm::Asin {
        mlp.init(&mut p, &mut init)?;
    }
    let mut g = GeneratorBundle { cfg: cfg.clone(), mlp, params: p, buffers: buf };
    g.refresh_spectral()?;
    Ok(g)
}

impl GeneratorBundle {
    fn sn_names(&self) -> Vec<String> {
        (0..self.cfg.n_res_enc)
            .flat_map(|j| (1..=2).map(move |s| format!("enc.res{j}.conv{s}.w")))
            .collect()
    }

    /// Advances every power-iteration vector against the current weights.
    pub fn refresh_spectral(&mut self) -> Result<()> {
        for name in self.sn_names() {
            let w: Vec<f64> = self.params.get(&name)?.iter().map(|&x| x as f64).collect();
            let rows = self.params.shape(&name)?[0];
            let cols = w.len() / rows;
            let u: Vec<f64> = self.buffers.get(&format!("{name}.u"))?.iter().map(|&x| x as f64).collect();
            if w.iter().all(|&x| x == 0.0) {
                log::warn!("{name} is zero; spectral vectors left as they are");
                continue;
            }
            let (nu, nv, _) = power_iteration(&w, rows, cols, self.cfg.spectral_iters, &u);
            *self.buffers.get_mut(&format!("{name}.u"))? = nu.iter().map(|&x| x as f32).collect();
            *self.buffers.get_mut(&format!("{name}.v"))? = nv.iter().map(|&x| x as f32).collect();
        }
        Ok(())
    }

    fn sn(&self, p: &Bound, name: &str) -> Result<Tensor> {
        let u: Vec<f64> = self.buffers.get(&format!("{name}.u"))?.iter().map(|&x| x as f64).collect();
        let v: Vec<f64> = self.buffers.get(&format!("{name}.v"))?.iter().map(|&x| x as f64).collect();
        sn_weight(p.t(name)?, &u, &v)
    }

    /// Encoder features `h(x)` at a quarter of the input resolution.
    pub fn encode(&self, p: &Bound, x: &Tensor) -> Result<Tensor> {
        let cfg = &self.cfg;
        let want = [cfg.channels, cfg.image_size, cfg.image_size];
        if x.ndim() != 4 || x.shape()[1..] != want {
            return invalid(format!("generator input {:?}, expected (N, {}, {}, {})", x.shape(), want[0], want[1], want[2]));
        }
        let in_relu = |h: Tensor, prefix: &str| -> Result<Tensor> {
            let n = in_apply(&h, p.t(&format!("{prefix}.g"))?, p.t(&format!("{prefix}.b"))?, NORM_EPS)?;
            Ok(nn::relu(&n)?)
        };
        let mut h = in_relu(nn::conv2d(x, p.t("enc.stem.w")?, None, 1, 3)?, "enc.stem.in")?;
        for i in 0..cfg.n_down {
            h = in_relu(nn::conv2d(&h, p.t(&format!("enc.down{i}.w"))?, None, 2, 1)?, &format!("enc.down{i}.in"))?;
        }
        for j in 0..cfg.n_res_enc {
            let w1 = self.sn(p, &format!("enc.res{j}.conv1.w"))?;
            let r = in_relu(nn::conv2d(&h, &w1, None, 1, 1)?, &format!("enc.res{j}.in1"))?;
            let w2 = self.sn(p, &format!("enc.res{j}.conv2.w"))?;
            let r = nn::conv2d(&r, &w2, None, 1, 1)?;
            let r = in_apply(&r, p.t(&format!("enc.res{j}.in2.g"))?, p.t(&format!("enc.res{j}.in2.b"))?, NORM_EPS)?;
            h = ops::add(&h, &r)?;
        }
        Ok(h)
    }

    fn decode(&self, p: &Bound, h: &Tensor, cond: &GenCondition<'_>, noise: NoiseMode) -> Result<Tensor> {
        let cfg = &self.cfg;
        let n = h.shape()[0];
        enum Steer {
            Asin(Tensor),
            Adain(Tensor),
        }
        let steer = match (cfg.decoder_norm, cond) {
            (DecoderNorm::Asin, GenCondition::Vector(c)) => {
                if c.shape().first() != Some(&n) {
                    return invalid(format!("{:?} conditions for batch {n}", c.shape()));
                }
                Steer::Asin(self.mlp.trunk(p, c)?)
            }
            (DecoderNorm::Adain, GenCondition::Style(s)) => {
                if s.shape().first() != Some(&n) {
                    return invalid(format!("{:?} style images for batch {n}", s.shape()));
                }
                Steer::Adain(self.encode(p, s)?)
            }
            (DecoderNorm::Asin, GenCondition::Style(_)) => return invalid("ASIN decoder needs condition vectors"),
            (DecoderNorm::Adain, GenCondition::Vector(_)) => return invalid("AdaIN decoder needs style images"),
        };
        let norm = |x: &Tensor, site: usize| -> Result<Tensor> {
            match &steer {
                Steer::Asin(trunk) => {
                    let (scale, shift) = self.mlp.head(p, trunk, site)?;
                    asin_apply_affine(x, &scale, &shift, NORM_EPS)
                }
                Steer::Adain(style) => adain_apply(x, style, NORM_EPS),
            }
        };
        let mut site_noise = 0u64;
        let mut add_noise = |x: Tensor, scale: &Tensor| -> Result<Tensor> {
            let stream = site_noise;
            site_noise += 1;
            inject_noise(x, scale, noise, stream)
        };

        let mut h = h.clone();
        for j in 0..cfg.n_res_dec {
            let r = nn::conv2d(&h, p.t(&format!("dec.res{j}.conv1.w"))?, None, 1, 1)?;
            let r = add_noise(r, p.t(&format!("dec.res{j}.noise1"))?)?;
            let r = nn::relu(&norm(&r, 2 * j)?)?;
            let r = nn::conv2d(&r, p.t(&format!("dec.res{j}.conv2.w"))?, None, 1, 1)?;
            let r = add_noise(r, p.t(&format!("dec.res{j}.noise2"))?)?;
            let r = norm(&r, 2 * j + 1)?;
            h = ops::add(&h, &r)?;
        }
        for i in 0..cfg.n_down {
            let u = nn::conv_transpose2d(&h, p.t(&format!("dec.up{i}.w"))?, None, 2, 1)?;
            let u = add_noise(u, p.t(&format!("dec.up{i}.noise"))?)?;
            let u = in_apply(&u, p.t(&format!("dec.up{i}.in.g"))?, p.t(&format!("dec.up{i}.in.b"))?, NORM_EPS)?;
            h = nn::relu(&u)?;
        }
        let out = nn::conv2d(&h, p.t("dec.out.w")?, Some(p.t("dec.out.b")?), 1, 3)?;
        Ok(ops::tanh(&out))
    }

    /// Binds the current parameters without tracking and runs a forward pass.
    pub fn forward(&self, x: &Tensor, cond: &GenCondition<'_>, noise: NoiseMode) -> Result<(Tensor, Tensor)> {
        no_grad(|| generator_forward(self, &self.params.bind(false), x, cond, noise))
    }
}

/// Adds per-pixel Gaussian noise, shared across channels and scaled per channel.
fn inject_noise(x: Tensor, scale: &Tensor, mode: NoiseMode, stream: u64) -> Result<Tensor> {
    let NoiseMode::Seeded(seed) = mode else {
        return Ok(x);
    };
    let &[n, c, h, w] = x.shape() else {
        return invalid(format!("noise site input {:?}", x.shape()));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let plane: Vec<f64> = (0..n * h * w).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut full = Vec::with_capacity(n * c * h * w);
    for s in 0..n {
        for _ in 0..c {
            full.extend_from_slice(&plane[s * h * w..(s + 1) * h * w]);
        }
    }
    let term = ops::mul_const(&nn::expand_channels(scale, n, h, w)?, Rc::new(full))?;
    Ok(ops::add(&x, &term)?)
}

/// `(y, h_x)`: the translated image in `[-1, 1]` and the encoder features.
pub fn generator_forward(
    g: &GeneratorBundle,
    p: &Bound,
    x: &Tensor,
    cond: &GenCondition<'_>,
    noise: NoiseMode,
) -> Result<(Tensor, Tensor)> {
    let h = g.encode(p, x)?;
    let y = g.decode(p, &h, cond, noise)?;
    if !y.all_finite() {
        return Err(XploreError::NonFinite("generator output".into()));
    }
    Ok((y, h))
}
