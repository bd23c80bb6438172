use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xplore_tensor::{adam_update, grad, ops, AdamState, Tensor};

use crate::cluster::ClusterModel;
use crate::data::ImageSet;
use crate::error::{invalid, Result, XploreError};
use crate::losses::{
    cls_loss_fake, cls_loss_real, critic_mean, cycle_reconstruction_loss, d_objective, g_objective,
    gradient_penalty, latent_loss, LossReport,
};
use crate::nets::{
    build_discriminator, build_generator, discriminator_forward, generator_forward, DecoderNorm,
    DiscriminatorBundle, GenCondition, GeneratorBundle, NetConfig, NoiseMode,
};
use crate::norm::condition_table;
use crate::params::ParamStore;
use crate::train::config::TrainConfig;

/// Decay of the running loss averages.
pub const RUNNING_DECAY: f64 = 0.99;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub step: u64,
    pub net: NetConfig,
    pub train: TrainConfig,
    pub g: GeneratorBundle,
    pub d: DiscriminatorBundle,
    pub adam_g: AdamState,
    pub adam_d: AdamState,
    pub running: LossReport,
    /// Condition vector per cluster, `k × cond_dim`.
    pub cond_table: Vec<f32>,
}

fn adam_for(store: &ParamStore) -> AdamState {
    AdamState::new(store.values().iter().map(Vec::len))
}

/// Fresh networks and optimizer state for training against `cluster`.
pub fn init_state(net: &NetConfig, train: &TrainConfig, cluster: &ClusterModel) -> Result<TrainState> {
    net.validate()?;
    train.validate()?;
    if cluster.k < 2 {
        return invalid(format!("need at least 2 clusters, got {}", cluster.k));
    }
    if net.k != cluster.k {
        return invalid(format!("net k = {} but the cluster model has k = {}", net.k, cluster.k));
    }
    let want = train.mode.dim(cluster.k, cluster.dim);
    if net.decoder_norm == DecoderNorm::Asin && net.cond_dim != want {
        return invalid(format!("cond_dim {} does not match {:?} conditioning ({want})", net.cond_dim, train.mode));
    }
    let g = build_generator(net, train.seed ^ 0x6765_6e65)?;
    let d = build_discriminator(net, train.seed ^ 0x6469_7363)?;
    let cond_table = condition_table(cluster, train.mode)?.into_iter().map(|v| v as f32).collect();
    Ok(TrainState {
        step: 0,
        net: net.clone(),
        train: train.clone(),
        adam_g: adam_for(&g.params),
        adam_d: adam_for(&d.params),
        g,
        d,
        running: LossReport::default(),
        cond_table,
    })
}

impl TrainState {
    pub fn cond_dim(&self) -> usize {
        self.cond_table.len() / self.net.k
    }

    /// `(N, cond_dim)` condition rows for the given clusters.
    pub fn conditions(&self, clusters: &[usize]) -> Result<Tensor> {
        let d = self.cond_dim();
        let mut v = Vec::with_capacity(clusters.len() * d);
        for &c in clusters {
            if c >= self.net.k {
                return Err(XploreError::ClusterOutOfRange { cluster: c, k: self.net.k });
            }
            v.extend(self.cond_table[c * d..(c + 1) * d].iter().map(|&x| x as f64));
        }
        Ok(Tensor::new(v, &[clusters.len(), d]))
    }
}

/// One mini-batch: images, their pseudo-labels and uniformly drawn targets.
pub struct Batch {
    pub indices: Vec<usize>,
    pub x: Tensor,
    pub k_src: Vec<usize>,
    pub cond_src: Tensor,
    pub k_tgt: Vec<usize>,
    pub cond_tgt: Tensor,
    /// For AdaIN decoders: a random member image of each target cluster.
    pub style_tgt: Option<Tensor>,
}

impl Batch {
    pub fn target(&self) -> GenCondition<'_> {
        match &self.style_tgt {
            Some(s) => GenCondition::Style(s),
            None => GenCondition::Vector(&self.cond_tgt),
        }
    }

    pub fn source(&self) -> GenCondition<'_> {
        match &self.style_tgt {
            Some(_) => GenCondition::Style(&self.x),
            None => GenCondition::Vector(&self.cond_src),
        }
    }
}

/// Per-step random stream, so a run's randomness depends only on `(seed, step)`.
pub fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step);
    rng
}

pub fn sample_batch(
    images: &ImageSet,
    labels: &[usize],
    state: &TrainState,
    batch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Batch> {
    let k = state.net.k;
    if labels.len() != images.count {
        return invalid(format!("{} pseudo-labels for {} images", labels.len(), images.count));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= k) {
        return Err(XploreError::ClusterOutOfRange { cluster: l, k });
    }
    if images.count == 0 {
        return invalid("empty dataset");
    }
    let indices: Vec<usize> = if batch <= images.count {
        sample(rng, images.count, batch).into_vec()
    } else {
        (0..batch).map(|_| rng.random_range(0..images.count)).collect()
    };
    let k_src: Vec<usize> = indices.iter().map(|&i| labels[i]).collect();
    let k_tgt: Vec<usize> = (0..batch).map(|_| rng.random_range(0..k)).collect();
    let style_tgt = if state.net.decoder_norm == DecoderNorm::Adain {
        let mut members = vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            members[l].push(i);
        }
        let mut pick = Vec::with_capacity(batch);
        for &t in &k_tgt {
            if members[t].is_empty() {
                return Err(XploreError::EmptyCluster(t));
            }
            pick.push(members[t][rng.random_range(0..members[t].len())]);
        }
        Some(images.batch_tensor(&pick))
    } else {
        None
    };
    Ok(Batch {
        x: images.batch_tensor(&indices),
        cond_src: state.conditions(&k_src)?,
        cond_tgt: state.conditions(&k_tgt)?,
        indices,
        k_src,
        k_tgt,
        style_tgt,
    })
}

fn grads_f64(loss: &Tensor, params: &[&Tensor]) -> Result<Vec<Vec<f64>>> {
    Ok(grad(loss, params, false)?.into_iter().map(|g| g.to_vec()).collect())
}

fn finite(value: f64, component: &'static str, step: u64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(XploreError::NonFiniteLoss { component, step })
    }
}

/// One critic update against fixed `fake` images; fills the critic fields of `report`.
pub fn critic_update(
    state: &mut TrainState,
    batch: &Batch,
    fake: &Tensor,
    gp_seed: u64,
    cfg: &TrainConfig,
    report: &mut LossReport,
) -> Result<()> {
    let step = state.step + 1;
    let d = &state.d;
    let p = d.params.bind(true);
    let (real_map, real_logits) = discriminator_forward(d, &p, &batch.x)?;
    let (fake_map, _) = discriminator_forward(d, &p, fake)?;
    let adv = ops::sub(&critic_mean(&real_map)?, &critic_mean(&fake_map)?)?;
    let gp = gradient_penalty(|x| Ok(discriminator_forward(d, &p, x)?.0), &batch.x, fake, gp_seed)?;
    let cls_real = cls_loss_real(&real_logits, &batch.k_src)?;
    let total = d_objective(&adv, &gp, &cls_real, &cfg.weights)?;
    report.adv_d = finite(adv.item(), "adv_d", step)?;
    report.gp = finite(gp.item(), "gp", step)?;
    report.cls_real = finite(cls_real.item(), "cls_real", step)?;
    report.total_d = finite(total.item(), "total_d", step)?;
    let grads = grads_f64(&total, &p.refs())?;
    adam_update(state.d.params.values_mut(), &grads, &mut state.adam_d, &cfg.adam.into())?;
    Ok(())
}

/// One generator update with the critic fixed; fills the generator fields of `report`.
pub fn generator_update(
    state: &mut TrainState,
    batch: &Batch,
    noise: (u64, u64),
    cfg: &TrainConfig,
    report: &mut LossReport,
) -> Result<()> {
    let step = state.step + 1;
    let w = cfg.weights;
    let (g, d) = (&state.g, &state.d);
    let pg = g.params.bind(true);
    let pd = d.params.bind(false);
    let (y, h_x) = generator_forward(g, &pg, &batch.x, &batch.target(), NoiseMode::Seeded(noise.0))?;
    let (fake_map, fake_logits) = discriminator_forward(d, &pd, &y)?;
    let adv_g = ops::mul_scalar(&critic_mean(&fake_map)?, -1.0);
    let cls_fake = cls_loss_fake(&fake_logits, &batch.k_tgt)?;
    let (x_rec, h_fake) = generator_forward(g, &pg, &y, &batch.source(), NoiseMode::Seeded(noise.1))?;
    let rec = cycle_reconstruction_loss(&batch.x, &x_rec)?;
    let lnt = latent_loss(&h_x, &h_fake)?;
    let total = g_objective(&adv_g, &cls_fake, &rec, &lnt, &w)?;
    report.adv_g = finite(adv_g.item(), "adv_g", step)?;
    report.cls_fake = finite(cls_fake.item(), "cls_fake", step)?;
    report.rec = finite(rec.item(), "rec", step)?;
    report.lnt = finite(lnt.item(), "lnt", step)?;
    report.total_g = finite(total.item(), "total_g", step)?;
    let grads = grads_f64(&total, &pg.refs())?;
    adam_update(state.g.params.values_mut(), &grads, &mut state.adam_g, &cfg.adam.into())?;
    Ok(())
}

/// `n_critic` critic updates on `batch`, then one generator update.
///
/// Every random draw comes from `(cfg.seed, step)`, so a resumed run
/// repeats the uninterrupted one.
pub fn train_step(state: &mut TrainState, batch: &Batch, cfg: &TrainConfig) -> Result<LossReport> {
    let step = state.step + 1;
    let mut seeds = step_rng(cfg.seed ^ 0x7365_6564, step);
    let mut report = LossReport::default();

    state.g.refresh_spectral()?;
    let fake = state.g.forward(&batch.x, &batch.target(), NoiseMode::Seeded(seeds.random()))?.0;
    for _ in 0..cfg.n_critic {
        let gp_seed: u64 = seeds.random();
        critic_update(state, batch, &fake, gp_seed, cfg, &mut report)?;
    }
    let noise = (seeds.random(), seeds.random());
    generator_update(state, batch, noise, cfg, &mut report)?;

    state.step = step;
    let mut run = state.running.values();
    let cur = report.values();
    for (r, c) in run.iter_mut().zip(cur) {
        *r = if step == 1 { c } else { RUNNING_DECAY * *r + (1.0 - RUNNING_DECAY) * c };
    }
    state.running = LossReport::from_values(run);
    Ok(report)
}
