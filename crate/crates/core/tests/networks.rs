use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xplore::nets::{
    build_discriminator, build_generator, generator_forward, spectral_normalize, GenCondition, NetConfig, NoiseMode,
};
use xplore::norm::ConditionMode;
use xplore_tensor::Tensor;

fn desk() -> NetConfig {
    NetConfig::desk(2, ConditionMode::MuSigma.dim(2, 16))
}

fn images(seed: u64, n: usize) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::new((0..n * 3 * 256).map(|_| rng.random_range(-1.0..1.0)).collect(), &[n, 3, 16, 16])
}

fn conds(seed: u64, n: usize, d: usize) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 5);
    Tensor::new((0..n * d).map(|_| rng.random_range(-0.5..0.5)).collect(), &[n, d])
}

fn largest_singular(w: &[f64], rows: usize, cols: usize) -> f64 {
    DMatrix::from_row_slice(rows, cols, w).singular_values().max()
}

#[test]
fn generator_parameter_table() {
    let (c, b, wb, cond, hid) = (3, 16, 64, 32, 256);
    let in_p = |ch: usize| 2 * ch;
    let stem = b * c * 49 + in_p(b);
    let down = (2 * b * b * 16 + in_p(2 * b)) + (wb * 2 * b * 16 + in_p(wb));
    let enc_res = 6 * 2 * (wb * wb * 9 + in_p(wb));
    let dec_res = 6 * 2 * (wb * wb * 9 + wb);
    let up = (wb * 2 * b * 16 + 2 * b + in_p(2 * b)) + (2 * b * b * 16 + b + in_p(b));
    let out = c * b * 49 + c;
    let trunk = (hid * cond + hid) + 5 * (hid * hid + hid);
    let heads = 12 * (2 * wb * hid + 2 * wb);
    let total = stem + down + enc_res + dec_res + up + out + trunk + heads;
    assert_eq!(total, 1_706_195);
    let g = build_generator(&desk(), 0).unwrap();
    assert_eq!(g.params.numel(), total);
    assert_eq!(g.mlp.param_count(), trunk + heads);
}

#[test]
fn discriminator_parameter_table() {
    let d = build_discriminator(&desk(), 0).unwrap();
    let convs = (16 * 3 * 16 + 16) + (32 * 16 * 16 + 32) + (64 * 32 * 16 + 64);
    assert_eq!(d.params.numel(), convs + 64 * 9 + 2 * 64 + 2);
}

#[test]
fn builds_are_seeded() {
    let a = build_generator(&desk(), 4).unwrap();
    assert_eq!(a, build_generator(&desk(), 4).unwrap());
    assert_ne!(a.params.checksum(), build_generator(&desk(), 5).unwrap().params.checksum());
    assert_eq!(build_discriminator(&desk(), 4).unwrap(), build_discriminator(&desk(), 4).unwrap());
    for (name, _, v) in a.params.iter() {
        if name.contains("noise") {
            assert!(v.iter().all(|&x| x == 0.0), "{name}");
        }
    }
}

#[test]
fn generator_shapes_range_and_noise() {
    let g = build_generator(&desk(), 1).unwrap();
    let x = images(1, 2);
    let c = conds(1, 2, 32);
    let (y, h) = g.forward(&x, &GenCondition::Vector(&c), NoiseMode::Off).unwrap();
    assert_eq!(y.shape(), &[2, 3, 16, 16]);
    assert_eq!(h.shape(), &[2, 64, 4, 4]);
    assert!(y.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    let (y2, _) = g.forward(&x, &GenCondition::Vector(&c), NoiseMode::Off).unwrap();
    assert_eq!(y.data(), y2.data());
    let (y3, _) = g.forward(&x, &GenCondition::Vector(&c), NoiseMode::Seeded(9)).unwrap();
    assert_eq!(y.data(), y3.data());

    let mut noisy = g.clone();
    for (i, name) in g.params.names().iter().enumerate() {
        if name.contains("noise") {
            noisy.params.values_mut()[i].iter_mut().for_each(|v| *v = 0.3);
        }
    }
    let (a, _) = noisy.forward(&x, &GenCondition::Vector(&c), NoiseMode::Seeded(9)).unwrap();
    let (b, _) = noisy.forward(&x, &GenCondition::Vector(&c), NoiseMode::Seeded(9)).unwrap();
    let (o, _) = noisy.forward(&x, &GenCondition::Vector(&c), NoiseMode::Off).unwrap();
    assert_eq!(a.data(), b.data());
    assert_ne!(a.data(), o.data());
}

#[test]
fn encoder_ignores_the_condition() {
    let g = build_generator(&desk(), 2).unwrap();
    let x = images(2, 2);
    let (_, h1) = g.forward(&x, &GenCondition::Vector(&conds(1, 2, 32)), NoiseMode::Off).unwrap();
    let (_, h2) = g.forward(&x, &GenCondition::Vector(&conds(2, 2, 32)), NoiseMode::Off).unwrap();
    assert_eq!(h1.data(), h2.data());
}

#[test]
fn condition_gradients_reach_the_perceptron() {
    let mut g = build_generator(&desk(), 3).unwrap();
    // Random heads so the output depends on the condition at all.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for (i, name) in g.params.names().to_vec().iter().enumerate() {
        if name.starts_with("mlp.head") && name.ends_with(".w") {
            g.params.values_mut()[i].iter_mut().for_each(|v| *v = rng.random_range(-0.01..0.01));
        }
    }
    let p = g.params.bind(true);
    let (y, _) = generator_forward(&g, &p, &images(3, 2), &GenCondition::Vector(&conds(3, 2, 32)), NoiseMode::Off).unwrap();
    let loss = xplore_tensor::nn::mean(&y).unwrap();
    let grads = xplore_tensor::grad(&loss, &[p.t("mlp.trunk0.w").unwrap(), p.t("mlp.head3.w").unwrap()], false).unwrap();
    for gr in grads {
        assert!(gr.data().iter().any(|&v| v != 0.0));
    }
}

#[test]
fn discriminator_shapes_and_linearity() {
    let mut d = build_discriminator(&desk(), 1).unwrap();
    let x = images(4, 3);
    let (adv, cls) = d.forward(&x).unwrap();
    assert_eq!(adv.shape(), &[3, 1, 2, 2]);
    assert_eq!(cls.shape(), &[3, 2]);
    assert!(adv.all_finite() && cls.all_finite());

    let i = d.params.position("d.adv.w").unwrap();
    d.params.values_mut()[i].iter_mut().for_each(|v| *v *= 2.0);
    let (adv2, _) = d.forward(&x).unwrap();
    for (a, b) in adv.data().iter().zip(adv2.data()) {
        assert!((2.0 * a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    for v in d.params.values_mut() {
        v.iter_mut().for_each(|x| *x = 0.0);
    }
    let (adv0, cls0) = d.forward(&x).unwrap();
    assert!(adv0.data().iter().chain(cls0.data()).all(|&v| v == 0.0));
}

#[test]
fn spectral_hand_cases() {
    let mut u = vec![0.6, 0.8];
    let w = spectral_normalize(&[3.0, 0.0, 0.0, 1.0], 2, 2, 50, &mut u).unwrap();
    let want = [1.0, 0.0, 0.0, 1.0 / 3.0];
    assert!(w.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-9), "{w:?}");
    let mut u = vec![1.0, 0.0];
    assert_eq!(spectral_normalize(&[1.0, 0.0, 0.0, 1.0], 2, 2, 5, &mut u).unwrap(), vec![1.0, 0.0, 0.0, 1.0]);
    assert!(spectral_normalize(&[1.0; 4], 2, 2, 0, &mut u).is_err());
}

#[test]
fn generator_spectral_weights_converge_against_svd() {
    let mut g = build_generator(&desk(), 6).unwrap();
    for _ in 0..300 {
        g.refresh_spectral().unwrap();
    }
    let p = g.params.bind(false);
    for name in ["enc.res0.conv1.w", "enc.res5.conv2.w"] {
        let u: Vec<f64> = g.buffers.get(&format!("{name}.u")).unwrap().iter().map(|&x| x as f64).collect();
        let v: Vec<f64> = g.buffers.get(&format!("{name}.v")).unwrap().iter().map(|&x| x as f64).collect();
        let w = xplore::nets::sn_weight(p.t(name).unwrap(), &u, &v).unwrap();
        let s = largest_singular(w.data(), 64, 576);
        assert!((s - 1.0).abs() < 1e-3, "{name}: {s}");
    }
}

#[test]
fn seeded_eight_by_eight_normalizes_to_unit_norm() {
    for seed in 0..32u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut u: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        // Persistent u: 5 iterations per call, as across training steps.
        let mut out = Vec::new();
        for _ in 0..40 {
            out = spectral_normalize(&w, 8, 8, 5, &mut u).unwrap();
        }
        let s = largest_singular(&out, 8, 8);
        assert!((s - 1.0).abs() < 1e-3, "seed {seed}: sigma {s}");
    }
}
