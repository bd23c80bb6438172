use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xplore::norm::{adain_apply, asin_apply, asin_apply_affine, in_apply, ConditioningMlp, NORM_EPS};
use xplore::params::{Init, ParamStore};
use xplore::selftest::{max_abs_diff, random_mlp};
use xplore_tensor::{nn, ops, Tensor};

fn pair_channel() -> Tensor {
    Tensor::new(vec![1.0, 3.0], &[1, 1, 1, 2])
}

/// Per-channel spread of at least 0.1 so the ε term stays negligible.
fn spread_input(seed: u64, n: usize, c: usize, hw: usize) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n * c * hw * hw).map(|_| rng.random_range(-2.0..2.0)).collect();
    for ch in v.chunks_mut(hw * hw) {
        ch[0] = -1.0;
        ch[1] = 1.0;
    }
    Tensor::new(v, &[n, c, hw, hw])
}

fn cond(seed: u64, n: usize, d: usize) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 77);
    Tensor::new((0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect(), &[n, d])
}

#[test]
fn identity_affine_reduces_to_instance_norm() {
    let y = asin_apply_affine(&pair_channel(), &Tensor::new(vec![1.0], &[1, 1]), &Tensor::new(vec![0.0], &[1, 1]), NORM_EPS).unwrap();
    assert!((y.data()[0] + 1.0).abs() < 1e-4 && (y.data()[1] - 1.0).abs() < 1e-4);
}

#[test]
fn scale_two_shift_five() {
    let y = asin_apply_affine(&pair_channel(), &Tensor::new(vec![2.0], &[1, 1]), &Tensor::new(vec![5.0], &[1, 1]), NORM_EPS).unwrap();
    assert!((y.data()[0] - 3.0).abs() < 1e-4 && (y.data()[1] - 7.0).abs() < 1e-4);
}

#[test]
fn constant_channel_outputs_the_shift() {
    let x = Tensor::full(&[1, 2, 2, 2], 4.0);
    let y = asin_apply_affine(&x, &Tensor::new(vec![3.0, -1.0], &[1, 2]), &Tensor::new(vec![0.5, -2.0], &[1, 2]), NORM_EPS).unwrap();
    assert_eq!(&y.data()[..4], &[0.5; 4]);
    assert_eq!(&y.data()[4..], &[-2.0; 4]);
}

#[test]
fn self_style_adain_is_near_identity() {
    let x = spread_input(2, 2, 3, 4);
    let y = adain_apply(&x, &x, NORM_EPS).unwrap();
    for (a, b) in x.data().iter().zip(y.data()) {
        assert!((a - b).abs() <= 1e-3 * a.abs().max(1.0));
    }
}

#[test]
fn constant_style_sets_the_mean() {
    let x = spread_input(3, 1, 2, 3);
    let style = Tensor::new([vec![1.5; 9], vec![-0.5; 9]].concat(), &[1, 2, 3, 3]);
    let y = adain_apply(&x, &style, NORM_EPS).unwrap();
    let (m, s) = nn::instance_stats(&y, 0.0).unwrap();
    assert!((m.data()[0] - 1.5).abs() < 1e-9 && (m.data()[1] + 0.5).abs() < 1e-9);
    assert!(s.data().iter().all(|&v| v < 1e-2));
}

#[test]
fn adain_hand_statistics() {
    // style {3, 7}: mean 5, population std 2
    let y = adain_apply(&pair_channel(), &Tensor::new(vec![3.0, 7.0], &[1, 1, 1, 2]), NORM_EPS).unwrap();
    assert!((y.data()[0] - 3.0).abs() < 1e-4 && (y.data()[1] - 7.0).abs() < 1e-4);
}

#[test]
fn plain_in_cases() {
    let x = spread_input(4, 2, 3, 4);
    let y = in_apply(&x, &Tensor::full(&[3], 1.0), &Tensor::zeros(&[3]), NORM_EPS).unwrap();
    let (m, s) = nn::instance_stats(&y, 0.0).unwrap();
    assert!(m.data().iter().all(|v| v.abs() < 1e-4));
    assert!(s.data().iter().all(|v| (v - 1.0).abs() < 1e-4));
    let g = Tensor::new(vec![0.5, 2.0, -1.0], &[3]);
    let b = Tensor::new(vec![0.1, 0.2, 0.3], &[3]);
    let via_in = in_apply(&x, &g, &b, NORM_EPS).unwrap();
    let g2 = Tensor::new([g.to_vec(), g.to_vec()].concat(), &[2, 3]);
    let b2 = Tensor::new([b.to_vec(), b.to_vec()].concat(), &[2, 3]);
    assert_eq!(via_in.data(), asin_apply_affine(&x, &g2, &b2, NORM_EPS).unwrap().data());
    let flat = in_apply(&x, &Tensor::zeros(&[3]), &b, NORM_EPS).unwrap();
    assert!(flat.data()[..16].iter().all(|&v| v == 0.1));
}

#[test]
fn zero_initialized_heads_reduce_to_instance_norm() {
    let mlp = ConditioningMlp::new(4, 7, 16, vec![3, 3]).unwrap();
    let mut store = ParamStore::new();
    mlp.init(&mut store, &mut Init::new(0)).unwrap();
    assert_eq!(store.numel(), mlp.param_count());
    let x = spread_input(5, 2, 3, 4);
    for site in 0..2 {
        let y = asin_apply(&x, &cond(1, 2, 4), &mlp, &store.bind(false), site, NORM_EPS).unwrap();
        assert!(max_abs_diff(y.data(), nn::instance_normalize(&x, NORM_EPS).unwrap().data()) < 1e-6);
    }
}

#[test]
fn wrong_condition_length_is_rejected() {
    let (mlp, store) = random_mlp(4, 3, 1).unwrap();
    let x = spread_input(1, 2, 3, 4);
    assert!(asin_apply(&x, &cond(1, 2, 5), &mlp, &store.bind(false), 0, NORM_EPS).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn output_statistics_follow_the_perceptron(seed in 0u64..10_000) {
        let (mlp, store) = random_mlp(4, 3, seed).unwrap();
        let p = store.bind(false);
        let x = spread_input(seed, 2, 3, 4);
        let c = cond(seed, 2, 4);
        let y = asin_apply(&x, &c, &mlp, &p, 0, NORM_EPS).unwrap();
        let (scale, shift) = mlp.affine(&p, &c, 0).unwrap();
        let (ym, ys) = nn::instance_stats(&y, 0.0).unwrap();
        let (_, xs) = nn::instance_stats(&x, 0.0).unwrap();
        prop_assert!(max_abs_diff(ym.data(), shift.data()) < 1e-5);
        for ((s, f), sx) in ys.data().iter().zip(scale.data()).zip(xs.data()) {
            let want = f.abs() * sx / (sx * sx + NORM_EPS).sqrt();
            prop_assert!((s - want).abs() < 1e-9);
            prop_assert!((s - f.abs()).abs() < 1e-3);
        }
    }

    #[test]
    fn content_affine_invariance(seed in 0u64..10_000, a in 0.2f64..5.0, b in -3.0f64..3.0) {
        let (mlp, store) = random_mlp(4, 3, seed).unwrap();
        let p = store.bind(false);
        let x = spread_input(seed, 2, 3, 4);
        let c = cond(seed, 2, 4);
        let moved = ops::add_scalar(&ops::mul_scalar(&x, a), b);

        let exact = asin_apply(&x, &c, &mlp, &p, 0, 0.0).unwrap();
        let exact2 = asin_apply(&moved, &c, &mlp, &p, 0, 0.0).unwrap();
        prop_assert!(max_abs_diff(exact.data(), exact2.data()) < 1e-10);

        // With eps under the root, y2 - y = s (x - mu) (1/sqrt(var + eps/a^2) - 1/sqrt(var + eps)).
        let y = asin_apply(&x, &c, &mlp, &p, 0, NORM_EPS).unwrap();
        let y2 = asin_apply(&moved, &c, &mlp, &p, 0, NORM_EPS).unwrap();
        let (scale, _) = mlp.affine(&p, &c, 0).unwrap();
        let (mean, std) = nn::instance_stats(&x, 0.0).unwrap();
        let plane = 16;
        for (i, (v, v2)) in y.data().iter().zip(y2.data()).enumerate() {
            let ch = i / plane;
            let var = std.data()[ch] * std.data()[ch];
            let k = 1.0 / (var + NORM_EPS / (a * a)).sqrt() - 1.0 / (var + NORM_EPS).sqrt();
            let predicted = scale.data()[ch] * (x.data()[i] - mean.data()[ch]) * k;
            prop_assert!((v2 - v - predicted).abs() < 1e-9);
        }
    }

    #[test]
    fn affine_parameters_ignore_content(seed in 0u64..10_000) {
        let (mlp, store) = random_mlp(4, 3, seed).unwrap();
        let p = store.bind(false);
        let c = cond(seed, 2, 4);
        let y1 = asin_apply(&spread_input(seed, 2, 3, 4), &c, &mlp, &p, 0, NORM_EPS).unwrap();
        let y2 = asin_apply(&spread_input(seed + 1, 2, 3, 4), &c, &mlp, &p, 0, NORM_EPS).unwrap();
        // Every output channel's mean is the shift, whatever the content.
        let (m1, _) = nn::instance_stats(&y1, 0.0).unwrap();
        let (m2, _) = nn::instance_stats(&y2, 0.0).unwrap();
        prop_assert!(max_abs_diff(m1.data(), m2.data()) < 1e-12);
        let (s1, b1) = mlp.affine(&p, &c, 0).unwrap();
        let (s2, b2) = mlp.affine(&p, &c, 0).unwrap();
        prop_assert_eq!(s1.data(), s2.data());
        prop_assert_eq!(b1.data(), b2.data());
        let again = asin_apply(&spread_input(seed, 2, 3, 4), &c, &mlp, &p, 0, NORM_EPS).unwrap();
        prop_assert_eq!(y1.data(), again.data());
    }
}
