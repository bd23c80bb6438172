//! Quick invariant checks bundled with the library, run by `xplore selftest`.

use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xplore_tensor::gradcheck::{check_op, finite_diff_grad_check, GradCheckConfig, GradCheckReport};
use xplore_tensor::nn::{self, OpKind};
use xplore_tensor::{ops, Tensor, TensorError};

use crate::cluster::io::{decode_cluster_model, encode_cluster_model};
use crate::cluster::{brute_force_kmeans, kmeans_fit_traced, ClusteringOptions};
use crate::data::io::{decode_features, decode_images, encode_features, encode_images};
use crate::data::{generate_synthetic_dataset, FeatureMatrix};
use crate::error::{Result, XploreError};
use crate::losses::{
    cls_loss_fake, cls_loss_real, critic_mean, cycle_reconstruction_loss, d_objective, g_objective, gradient_penalty,
    latent_loss, LossWeights,
};
use crate::nets::{
    build_discriminator, build_generator, discriminator_forward, generator_forward, DecoderNorm, DiscriminatorBundle,
    GenCondition, GeneratorBundle, NetConfig, NoiseMode,
};
use crate::norm::{asin_apply, ConditioningMlp, NORM_EPS};
use crate::params::{Bound, Init, ParamStore};

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, r: Result<(bool, String)>) -> CheckOutcome {
    match r {
        Ok((passed, detail)) => CheckOutcome { name, passed, detail },
        Err(e) => CheckOutcome { name, passed: false, detail: format!("error: {e}") },
    }
}

/// Runs every check; the suite passes iff every outcome does.
pub fn run_selftest() -> Vec<CheckOutcome> {
    vec![
        outcome("kmeans-oracle", kmeans_oracle(30)),
        outcome("kmeans-example", kmeans_example()),
        outcome("asin-invariants", asin_invariants()),
        outcome("op-gradients", op_gradients()),
        outcome("gradient-penalty", gp_analytic()),
        outcome("loss-gradients", loss_gradients()),
        outcome("format-roundtrip", format_roundtrip()),
    ]
}

/// Random small instance: `n ≤ 8` points in `d ≤ 3` dimensions, `k ≤ 3`.
pub fn random_instance(seed: u64) -> (FeatureMatrix, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(4..=8);
    let d = rng.random_range(1..=3);
    let k = rng.random_range(2..=3);
    let vals = (0..n * d).map(|_| rng.random_range(-5.0..5.0)).collect();
    (FeatureMatrix::new(n, d, vals).expect("finite"), k)
}

fn kmeans_oracle(instances: u64) -> Result<(bool, String)> {
    let mut optimal = 0;
    let mut monotone = true;
    for s in 0..instances {
        let (f, k) = random_instance(s);
        let opts = ClusteringOptions { restarts: 20, seed: s, ..Default::default() };
        let (m, traces) = kmeans_fit_traced(&f, k, &opts)?;
        let best = brute_force_kmeans(&f, k)?;
        optimal += usize::from((m.inertia - best.inertia).abs() <= 1e-9);
        monotone &= traces.iter().all(|t| t.inertia_history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }
    let need = (instances as usize * 95).div_ceil(100);
    Ok((optimal >= need && monotone, format!("{optimal}/{instances} optimal, monotone {monotone}")))
}

fn kmeans_example() -> Result<(bool, String)> {
    let f = FeatureMatrix::new(4, 1, vec![0.0, 1.0, 10.0, 11.0])?;
    let (m, _) = kmeans_fit_traced(&f, 2, &ClusteringOptions::default())?;
    let mut c = m.centroids.clone();
    c.sort_by(f64::total_cmp);
    let ok = (c[0] - 0.5).abs() < 1e-12 && (c[1] - 10.5).abs() < 1e-12 && (m.inertia - 1.0).abs() < 1e-12;
    Ok((ok, format!("centroids {c:?}, inertia {}", m.inertia)))
}

/// A perceptron with random heads, so scale and shift vary with the condition.
pub fn random_mlp(cond_dim: usize, channels: usize, seed: u64) -> Result<(ConditioningMlp, ParamStore)> {
    let mlp = ConditioningMlp::new(cond_dim, 3, 8, vec![channels])?;
    let mut store = ParamStore::new();
    let mut init = Init::new(seed);
    mlp.init(&mut store, &mut init)?;
    let w = store.get_mut("mlp.head0.w")?;
    let n = w.len();
    *w = init.he(n, 8);
    Ok((mlp, store))
}

fn asin_invariants() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n, c, hw) = (2, 3, 4);
    let x = Tensor::new((0..n * c * hw * hw).map(|_| rng.random_range(-2.0..2.0)).collect(), &[n, c, hw, hw]);
    let cond = Tensor::new((0..n * 4).map(|_| rng.random_range(-1.0..1.0)).collect(), &[n, 4]);
    let (mlp, store) = random_mlp(4, c, 5)?;
    let p = store.bind(false);

    let y = asin_apply(&x, &cond, &mlp, &p, 0, NORM_EPS)?;
    let (_, shift) = mlp.affine(&p, &cond, 0)?;
    let (mean, _) = nn::instance_stats(&y, 0.0)?;
    let mean_err = max_abs_diff(mean.data(), shift.data());

    let moved = ops::add_scalar(&ops::mul_scalar(&x, 3.5), -1.25);
    let y2 = asin_apply(&moved, &cond, &mlp, &p, 0, NORM_EPS)?;
    let affine_err = max_abs_diff(y.data(), y2.data());

    let (plain_mlp, plain) = {
        let mlp = ConditioningMlp::new(4, 3, 8, vec![c])?;
        let mut s = ParamStore::new();
        mlp.init(&mut s, &mut Init::new(1))?;
        (mlp, s)
    };
    let y_id = asin_apply(&x, &cond, &plain_mlp, &plain.bind(false), 0, NORM_EPS)?;
    let in_err = max_abs_diff(y_id.data(), nn::instance_normalize(&x, NORM_EPS)?.data());

    let (s1, b1) = mlp.affine(&p, &cond, 0)?;
    let (s2, b2) = mlp.affine(&p, &cond, 0)?;
    let bitwise = s1.data() == s2.data() && b1.data() == b2.data();

    let ok = mean_err < 1e-5 && affine_err < 1e-4 && in_err < 1e-6 && bitwise;
    Ok((ok, format!("mean {mean_err:.2e}, affine {affine_err:.2e}, plain IN {in_err:.2e}")))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Tolerance and step for every gradient check in the suite.
pub fn gradcheck_config(seed: u64) -> GradCheckConfig {
    GradCheckConfig { h: 1e-6, tol: 1e-4, max_coords_per_input: Some(12), seed }
}

fn op_gradients() -> Result<(bool, String)> {
    let cfg = gradcheck_config(3);
    let mut worst = 0.0f64;
    let mut failed = Vec::new();
    for kind in OpKind::ALL {
        let r = check_op(kind, 2, &cfg)?;
        worst = worst.max(r.max_rel_error);
        if !r.passed() {
            failed.push(kind.name());
        }
    }
    Ok((failed.is_empty(), format!("max rel error {worst:.2e}, failing {failed:?}")))
}

/// A linear critic `x ↦ w·x` on flattened inputs.
pub fn linear_critic(w: Vec<f64>, n: usize) -> impl Fn(&Tensor) -> Result<Tensor> {
    let d = w.len();
    let tiled: Rc<Vec<f64>> = Rc::new((0..n).flat_map(|_| w.iter().copied()).collect());
    move |x: &Tensor| {
        let flat = ops::reshape(x, &[n, d])?;
        let s = ops::sum_axis(&ops::mul_const(&flat, tiled.clone())?, 1)?;
        Ok(ops::reshape(&s, &[n, 1])?)
    }
}

fn gp_analytic() -> Result<(bool, String)> {
    let n = 4;
    let real = Tensor::new((0..n * 3).map(|i| i as f64 * 0.1).collect(), &[n, 3]);
    let fake = Tensor::new((0..n * 3).map(|i| 1.0 - i as f64 * 0.05).collect(), &[n, 3]);
    let unit = vec![0.6, 0.0, 0.8];
    let gp1 = gradient_penalty(linear_critic(unit.clone(), n), &real, &fake, 9)?.item();
    let gp2 = gradient_penalty(linear_critic(unit.iter().map(|v| 2.0 * v).collect(), n), &real, &fake, 9)?.item();
    let ok = gp1.abs() < 1e-10 && (gp2 - 1.0).abs() < 1e-10;
    Ok((ok, format!("unit {gp1:.2e}, slope two {gp2}")))
}

fn format_roundtrip() -> Result<(bool, String)> {
    let images = generate_synthetic_dataset(&"2x3".parse()?, 8, 2)?;
    let images_ok = decode_images(&encode_images(&images)?)? == images;
    let f = FeatureMatrix::new(2, 2, vec![0.5, -0.25, 1.0, 3.0])?;
    let feats_ok = decode_features(&encode_features(&f)?)?.values == f.values;
    let (m, _) = kmeans_fit_traced(&FeatureMatrix::new(4, 1, vec![0.0, 1.0, 10.0, 11.0])?, 2, &ClusteringOptions::default())?;
    let cm_ok = decode_cluster_model(&encode_cluster_model(&m)?)? == m;
    let mut bad = encode_images(&images)?;
    bad[0] = b'Y';
    let magic_ok = decode_images(&bad).is_err();
    let ok = images_ok && feats_ok && cm_ok && magic_ok;
    Ok((ok, format!("images {images_ok}, features {feats_ok}, clusters {cm_ok}, bad magic rejected {magic_ok}")))
}

fn to_tensor_err(e: XploreError) -> TensorError {
    match e {
        XploreError::Tensor(t) => t,
        other => TensorError::InvalidArgument { op: "objective", detail: other.to_string() },
    }
}

/// Two-level generator and one-layer critic small enough for coordinate-wise checks.
pub fn tiny_net() -> NetConfig {
    NetConfig {
        channels: 2,
        image_size: 4,
        base_width: 2,
        n_down: 1,
        n_res_enc: 1,
        n_res_dec: 1,
        k: 2,
        cond_dim: 3,
        mlp_depth: 2,
        mlp_hidden: 3,
        noise_init: 0.1,
        spectral_iters: 1,
        d_layers: 1,
        decoder_norm: DecoderNorm::Asin,
    }
}

/// Fixed inputs for the composed critic and generator objectives.
pub struct TinySetup {
    pub g: GeneratorBundle,
    pub d: DiscriminatorBundle,
    pub x: Tensor,
    pub fake: Tensor,
    pub cond_src: Tensor,
    pub cond_tgt: Tensor,
    pub k_src: Vec<usize>,
    pub k_tgt: Vec<usize>,
    pub weights: LossWeights,
}

pub fn tiny_setup(seed: u64) -> Result<TinySetup> {
    let net = tiny_net();
    let g = build_generator(&net, seed)?;
    let d = build_discriminator(&net, seed + 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |shape: &[usize], lo: f64, hi: f64| {
        Tensor::new((0..shape.iter().product()).map(|_| rng.random_range(lo..hi)).collect(), shape)
    };
    let x = uniform(&[2, 2, 4, 4], -1.0, 1.0);
    let cond_src = uniform(&[2, 3], -1.0, 1.0);
    let cond_tgt = uniform(&[2, 3], -1.0, 1.0);
    let mut g = g;
    for (i, name) in g.params.names().to_vec().iter().enumerate() {
        if name.starts_with("mlp.head") && name.ends_with(".w") {
            let n = g.params.values()[i].len();
            g.params.values_mut()[i] = Init::new(seed ^ i as u64).he(n, 3);
        }
    }
    let fake = g.forward(&x, &GenCondition::Vector(&cond_tgt), NoiseMode::Seeded(seed))?.0;
    Ok(TinySetup { g, d, x, fake, cond_src, cond_tgt, k_src: vec![0, 1], k_tgt: vec![1, 0], weights: LossWeights::default() })
}

impl TinySetup {
    /// `L_D` as a function of the critic's parameters.
    pub fn critic_objective(&self, d_params: &[Tensor]) -> Result<Tensor> {
        let p = Bound::from_tensors(&self.d.params, d_params.to_vec())?;
        let (real_map, logits) = discriminator_forward(&self.d, &p, &self.x)?;
        let (fake_map, _) = discriminator_forward(&self.d, &p, &self.fake)?;
        let adv = ops::sub(&critic_mean(&real_map)?, &critic_mean(&fake_map)?)?;
        let gp = gradient_penalty(|t| Ok(discriminator_forward(&self.d, &p, t)?.0), &self.x, &self.fake, 5)?;
        d_objective(&adv, &gp, &cls_loss_real(&logits, &self.k_src)?, &self.weights)
    }

    /// `L_G` as a function of the generator's parameters, with the critic fixed.
    pub fn generator_objective(&self, g_params: &[Tensor]) -> Result<Tensor> {
        let p = Bound::from_tensors(&self.g.params, g_params.to_vec())?;
        let pd = self.d.params.bind(false);
        let (y, h_x) = generator_forward(&self.g, &p, &self.x, &GenCondition::Vector(&self.cond_tgt), NoiseMode::Seeded(1))?;
        let (map, logits) = discriminator_forward(&self.d, &pd, &y)?;
        let adv_g = ops::mul_scalar(&critic_mean(&map)?, -1.0);
        let (x_rec, h_fake) = generator_forward(&self.g, &p, &y, &GenCondition::Vector(&self.cond_src), NoiseMode::Seeded(2))?;
        g_objective(
            &adv_g,
            &cls_loss_fake(&logits, &self.k_tgt)?,
            &cycle_reconstruction_loss(&self.x, &x_rec)?,
            &latent_loss(&h_x, &h_fake)?,
            &self.weights,
        )
    }
}

/// Gradient checks of `L_D` over critic parameters and `L_G` over generator parameters.
pub fn composed_gradient_check(seed: u64) -> Result<(GradCheckReport, GradCheckReport)> {
    let s = tiny_setup(seed)?;
    let cfg = GradCheckConfig { max_coords_per_input: None, ..gradcheck_config(seed) };
    let d_in = s.d.params.bind(false).tensors;
    let d = finite_diff_grad_check(|t| s.critic_objective(t).map_err(to_tensor_err), &d_in, &cfg)?;
    let g_in = s.g.params.bind(false).tensors;
    let g = finite_diff_grad_check(|t| s.generator_objective(t).map_err(to_tensor_err), &g_in, &cfg)?;
    Ok((d, g))
}

/// A two-layer critic `x ↦ w₂·tanh(W₁x)` on `(N, 3)` inputs, returning `(N, 1)`.
fn mlp_critic(x: &Tensor, w1: &Tensor, w2: &Tensor) -> Result<Tensor> {
    let h = ops::tanh(&nn::dense(x, w1, None)?);
    Ok(nn::dense(&h, w2, None)?)
}

/// Named gradient checks of every individual loss term.
pub fn loss_gradient_checks(seed: u64) -> Result<Vec<(&'static str, GradCheckReport)>> {
    let cfg = gradcheck_config(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |shape: &[usize]| Tensor::new((0..shape.iter().product()).map(|_| rng.random_range(-1.0..1.0)).collect(), shape);
    let logits = uniform(&[4, 3]);
    let a = uniform(&[2, 3, 2, 2]);
    let offset = uniform(&[2, 3, 2, 2]).data().iter().map(|v| if *v >= 0.0 { v + 0.1 } else { v - 0.1 }).collect();
    let b = ops::add(&a, &Tensor::new(offset, &[2, 3, 2, 2]))?;
    let h1 = uniform(&[2, 4, 2, 2]);
    let h2 = uniform(&[2, 4, 2, 2]);
    let map = uniform(&[3, 1, 2, 2]);
    let real = uniform(&[4, 3]);
    let fake = uniform(&[4, 3]);
    let w1 = uniform(&[5, 3]);
    let w2 = uniform(&[1, 5]);

    let wrap = |r: Result<Tensor>| r.map_err(to_tensor_err);
    Ok(vec![
        ("cls_real", finite_diff_grad_check(|t| wrap(cls_loss_real(&t[0], &[0, 2, 1, 1])), std::slice::from_ref(&logits), &cfg)?),
        ("cls_fake", finite_diff_grad_check(|t| wrap(cls_loss_fake(&t[0], &[2, 2, 0, 1])), &[logits], &cfg)?),
        ("cycle", finite_diff_grad_check(|t| wrap(cycle_reconstruction_loss(&t[0], &t[1])), &[a, b], &cfg)?),
        ("latent", finite_diff_grad_check(|t| wrap(latent_loss(&t[0], &t[1])), &[h1, h2], &cfg)?),
        ("adversarial", finite_diff_grad_check(|t| wrap(critic_mean(&t[0])), &[map], &cfg)?),
        (
            "gradient_penalty",
            finite_diff_grad_check(
                |t| wrap(gradient_penalty(|x| mlp_critic(x, &t[0], &t[1]), &real, &fake, 3)),
                &[w1, w2],
                &cfg,
            )?,
        ),
    ])
}

fn loss_gradients() -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    let mut failed = Vec::new();
    for (name, r) in loss_gradient_checks(1)? {
        worst = worst.max(r.max_rel_error);
        if !r.passed() {
            failed.push(name);
        }
    }
    let (d, g) = composed_gradient_check(1)?;
    worst = worst.max(d.max_rel_error).max(g.max_rel_error);
    if !d.passed() {
        failed.push("L_D");
    }
    if !g.passed() {
        failed.push("L_G");
    }
    Ok((failed.is_empty(), format!("max rel error {worst:.2e}, failing {failed:?}")))
}
