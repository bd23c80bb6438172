use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xplore::losses::{
    adversarial_losses, cls_loss_fake, cls_loss_real, cycle_reconstruction_loss, gradient_penalty, latent_loss,
    total_objectives, LossReport, LossWeights,
};
use xplore::selftest::{composed_gradient_check, linear_critic, loss_gradient_checks};
use xplore_tensor::Tensor;

fn random(seed: u64, shape: &[usize]) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::new((0..shape.iter().product()).map(|_| rng.random_range(-1.0..1.0)).collect(), shape)
}

#[test]
fn classification_hand_values() {
    let l = cls_loss_real(&Tensor::new(vec![0.0, 0.0], &[1, 2]), &[0]).unwrap().item();
    assert!((l - 2f64.ln()).abs() < 1e-12);
    let l = cls_loss_real(&Tensor::new(vec![20.0, 0.0], &[1, 2]), &[0]).unwrap().item();
    assert!((l - (1.0 + (-20f64).exp()).ln()).abs() < 1e-20 && l < 2.1e-9);
    let l = cls_loss_fake(&Tensor::zeros(&[3, 5]), &[0, 4, 2]).unwrap().item();
    assert!((l - 5f64.ln()).abs() < 1e-12);
    let logits = random(1, &[4, 3]);
    assert_eq!(
        cls_loss_fake(&logits, &[0, 1, 2, 0]).unwrap().item(),
        cls_loss_real(&logits, &[0, 1, 2, 0]).unwrap().item()
    );
}

#[test]
fn cycle_hand_values() {
    let x = random(2, &[2, 3, 4, 4]);
    assert_eq!(cycle_reconstruction_loss(&x, &x).unwrap().item(), 0.0);
    let shifted = xplore_tensor::ops::add_scalar(&x, 0.25);
    assert!((cycle_reconstruction_loss(&x, &shifted).unwrap().item() - 0.25).abs() < 1e-12);
    let y = random(3, &[2, 3, 4, 4]);
    let oracle = x.data().iter().zip(y.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / x.numel() as f64;
    assert!((cycle_reconstruction_loss(&x, &y).unwrap().item() - oracle).abs() < 1e-12);
    assert!(cycle_reconstruction_loss(&x, &random(3, &[1, 3, 4, 4])).is_err());
}

#[test]
fn latent_hand_values() {
    let h = Tensor::new(vec![1.0, 2.0], &[1, 2]);
    assert_eq!(latent_loss(&h, &h).unwrap().item(), 0.0);
    let other = Tensor::new(vec![4.0, 6.0], &[1, 2]);
    assert!((latent_loss(&h, &other).unwrap().item() - 5.0).abs() < 1e-12);
    let far = Tensor::new(vec![7.0, 10.0], &[1, 2]);
    assert!((latent_loss(&h, &far).unwrap().item() - 10.0).abs() < 1e-12);
}

#[test]
fn penalty_analytic_cases() {
    let (real, fake) = (random(4, &[5, 3]), random(5, &[5, 3]));
    let gp = gradient_penalty(linear_critic(vec![0.0, 0.6, -0.8], 5), &real, &fake, 1).unwrap().item();
    assert!(gp.abs() < 1e-10);
    let (r1, f1) = (random(6, &[4, 1]), random(7, &[4, 1]));
    let gp = gradient_penalty(linear_critic(vec![2.0], 4), &r1, &f1, 1).unwrap().item();
    assert!((gp - 1.0).abs() < 1e-10);
    let terms = adversarial_losses(linear_critic(vec![2.0], 4), &r1, &f1, 10.0, 1).unwrap();
    assert!((terms.gp_value.item() - 1.0).abs() < 1e-10);
    let expected = -terms.adv_value.item() + 10.0;
    assert!((terms.d_loss_part.item() - expected).abs() < 1e-10);
}

#[test]
fn objective_composition() {
    let w = LossWeights::default();
    assert_eq!((w.gp, w.rec, w.lnt, w.cls), (10.0, 10.0, 10.0, 1.0));
    let r = LossReport { adv_d: 1.0, gp: 0.1, cls_real: 0.5, ..Default::default() };
    assert!((total_objectives(&r, &w).0 - 0.5).abs() < 1e-12);
}

#[test]
fn every_loss_passes_gradient_checks() {
    for (name, report) in loss_gradient_checks(4).unwrap() {
        assert!(report.passed(), "{name}: {report:?}");
        assert!(report.checked > 0, "{name}");
    }
}

#[test]
fn composed_objectives_pass_gradient_checks() {
    let (d, g) = composed_gradient_check(2).unwrap();
    assert!(d.passed(), "L_D: {:?}", d.failures);
    assert!(g.passed(), "L_G: {:?}", g.failures);
    let s = xplore::selftest::tiny_setup(2).unwrap();
    assert_eq!(d.checked + d.excluded_kinks, s.d.params.numel());
    assert_eq!(g.checked + g.excluded_kinks, s.g.params.numel());
    assert!(d.excluded_kinks * 10 < d.checked && g.excluded_kinks * 10 < g.checked, "{d:?} {g:?}");
}

fn report_from(v: [f64; 9]) -> LossReport {
    LossReport::from_values(v)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn objectives_linear_in_each_weight(v in proptest::array::uniform9(-5.0f64..5.0), which in 0usize..4, delta in 0.0f64..20.0) {
        let r = report_from(v);
        let base = LossWeights::default();
        let mut bumped = base;
        match which {
            0 => bumped.cls += delta,
            1 => bumped.rec += delta,
            2 => bumped.lnt += delta,
            _ => bumped.gp += delta,
        }
        let (d0, g0) = total_objectives(&r, &base);
        let (d1, g1) = total_objectives(&r, &bumped);
        let (dd, dg) = match which {
            0 => (delta * r.cls_real, delta * r.cls_fake),
            1 => (0.0, delta * r.rec),
            2 => (0.0, delta * r.lnt),
            _ => (delta * r.gp, 0.0),
        };
        prop_assert!(((d1 - d0) - dd).abs() < 1e-9);
        prop_assert!(((g1 - g0) - dg).abs() < 1e-9);
    }

    #[test]
    fn nonnegative_terms(seed in 0u64..10_000) {
        let a = random(seed, &[2, 3, 2, 2]);
        let b = random(seed + 1, &[2, 3, 2, 2]);
        prop_assert!(cycle_reconstruction_loss(&a, &b).unwrap().item() >= 0.0);
        prop_assert!(latent_loss(&a, &b).unwrap().item() >= 0.0);
        prop_assert!(cls_loss_real(&random(seed, &[3, 4]), &[0, 3, 1]).unwrap().item() >= 0.0);
        let gp = gradient_penalty(linear_critic(random(seed, &[3]).to_vec(), 2), &random(seed, &[2, 3]), &random(seed + 2, &[2, 3]), seed).unwrap();
        prop_assert!(gp.item() >= 0.0);
    }

    #[test]
    fn latent_is_homogeneous(seed in 0u64..10_000, s in 0.1f64..4.0) {
        let a = random(seed, &[3, 4]);
        let b = random(seed + 1, &[3, 4]);
        let scaled_b: Vec<f64> = a.data().iter().zip(b.data()).map(|(x, y)| x + s * (y - x)).collect();
        let l1 = latent_loss(&a, &b).unwrap().item();
        let l2 = latent_loss(&a, &Tensor::new(scaled_b, &[3, 4])).unwrap().item();
        prop_assert!((l2 - s * l1).abs() < 1e-9);
    }
}
