//! Central-difference gradient checking.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::rc::Rc;

use crate::autograd::grad;
use crate::error::Result;
use crate::kink;
use crate::nn::{self, OpKind};
use crate::ops;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub h: f64,
    pub tol: f64,
    /// Check at most this many coordinates per input (sampled), `None` for all.
    pub max_coords_per_input: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            h: 1e-5,
            tol: 1e-5,
            max_coords_per_input: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordCheck {
    pub input: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates whose ±h evaluations took different non-smooth branches.
    pub excluded_kinks: usize,
    pub failures: Vec<CoordCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.checked > 0
    }

    fn merge(&mut self, other: GradCheckReport) {
        self.max_rel_error = self.max_rel_error.max(other.max_rel_error);
        self.checked += other.checked;
        self.excluded_kinks += other.excluded_kinks;
        self.failures.extend(other.failures);
    }
}

/// `|a − n| / max(1, |a|, |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

/// Compares reverse-mode gradients of the scalar `f(inputs)` against central
/// differences, coordinate by coordinate.
pub fn finite_diff_grad_check<F>(f: F, inputs: &[Tensor], cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    let leaves: Vec<Tensor> = inputs.iter().map(|t| t.requires_grad()).collect();
    let refs: Vec<&Tensor> = leaves.iter().collect();
    let y = f(&leaves)?;
    let analytic = grad(&y, &refs, false)?;

    let consts: Vec<Tensor> = inputs.iter().map(|t| t.detach()).collect();
    let (_, base_print) = kink::fingerprint(|| f(&consts));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradCheckReport::default();
    for (i, input) in inputs.iter().enumerate() {
        let n = input.numel();
        let coords: Vec<usize> = match cfg.max_coords_per_input {
            Some(m) if m < n => {
                let mut c = sample(&mut rng, n, m).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..n).collect(),
        };
        for j in coords {
            let eval = |delta: f64| -> Result<(f64, u64)> {
                let mut data = input.to_vec();
                data[j] += delta;
                let mut args = consts.clone();
                args[i] = Tensor::new(data, input.shape());
                let (out, print) = kink::fingerprint(|| f(&args));
                Ok((out?.item(), print))
            };
            let (fp, pp) = eval(cfg.h)?;
            let (fm, pm) = eval(-cfg.h)?;
            if pp != base_print || pm != base_print {
                report.excluded_kinks += 1;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * cfg.h);
            let a = analytic[i].data()[j];
            let rel = relative_error(a, numeric);
            report.checked += 1;
            if rel > report.max_rel_error || rel.is_nan() {
                report.max_rel_error = if rel.is_nan() { f64::INFINITY } else { rel };
            }
            if rel.is_nan() || rel >= cfg.tol {
                report.failures.push(CoordCheck {
                    input: i,
                    index: j,
                    analytic: a,
                    numeric,
                    rel_error: rel,
                });
            }
        }
    }
    Ok(report)
}

pub type ScalarFn = Box<dyn Fn(&[Tensor]) -> Result<Tensor>>;

/// Inputs plus a scalar-valued closure exercising one op kind.
pub struct OpCase {
    pub kind: OpKind,
    pub inputs: Vec<Tensor>,
    pub eval: ScalarFn,
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new((0..n).map(|_| rng.random_range(-1.0..1.0)).collect(), shape)
}

/// Values with magnitude in `[0.1, 1]`, away from kinks at zero.
fn off_kink(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let vals = (0..n)
        .map(|_| {
            let m = rng.random_range(0.1..1.0);
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(vals, shape)
}

/// Reduces a tensor to a scalar with fixed random weights so every output
/// coordinate contributes a distinct sensitivity.
fn weighted_sum(t: &Tensor, weights: &Rc<Vec<f64>>) -> Result<Tensor> {
    ops::sum_all(&ops::mul_const(t, weights.clone())?)
}

fn weights_for(rng: &mut ChaCha8Rng, n: usize) -> Rc<Vec<f64>> {
    Rc::new((0..n).map(|_| rng.random_range(0.5..1.5)).collect())
}

/// Builds a seeded random instance of `kind` for gradient checking.
pub fn op_case(kind: OpKind, seed: u64) -> OpCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let r = &mut rng;
    let (inputs, eval): (Vec<Tensor>, ScalarFn) = match kind {
        OpKind::Conv2d => {
            let w = weights_for(r, 2 * 3 * 3 * 3);
            (
                vec![uniform(r, &[2, 2, 5, 5]), uniform(r, &[3, 2, 3, 3]), uniform(r, &[3])],
                Box::new(move |t| weighted_sum(&nn::conv2d(&t[0], &t[1], Some(&t[2]), 2, 1)?, &w)),
            )
        }
        OpKind::ConvTranspose2d => {
            let w = weights_for(r, 2 * 2 * 6 * 6);
            (
                vec![uniform(r, &[2, 3, 3, 3]), uniform(r, &[3, 2, 4, 4]), uniform(r, &[2])],
                Box::new(move |t| weighted_sum(&nn::conv_transpose2d(&t[0], &t[1], Some(&t[2]), 2, 1)?, &w)),
            )
        }
        OpKind::Dense => {
            let w = weights_for(r, 15);
            (
                vec![uniform(r, &[3, 4]), uniform(r, &[5, 4]), uniform(r, &[5])],
                Box::new(move |t| weighted_sum(&nn::dense(&t[0], &t[1], Some(&t[2]))?, &w)),
            )
        }
        OpKind::Relu => {
            let w = weights_for(r, 12);
            (vec![off_kink(r, &[12])], Box::new(move |t| weighted_sum(&nn::relu(&t[0])?, &w)))
        }
        OpKind::LeakyRelu => {
            let w = weights_for(r, 12);
            (vec![off_kink(r, &[12])], Box::new(move |t| weighted_sum(&nn::leaky_relu(&t[0])?, &w)))
        }
        OpKind::Tanh => {
            let w = weights_for(r, 10);
            (vec![uniform(r, &[10])], Box::new(move |t| weighted_sum(&ops::tanh(&t[0]), &w)))
        }
        OpKind::Add => {
            let w = weights_for(r, 12);
            (
                vec![uniform(r, &[3, 4]), uniform(r, &[3, 4])],
                Box::new(move |t| weighted_sum(&ops::add(&t[0], &t[1])?, &w)),
            )
        }
        OpKind::MulScalar => {
            let w = weights_for(r, 6);
            (vec![uniform(r, &[6])], Box::new(move |t| weighted_sum(&ops::mul_scalar(&t[0], -1.7), &w)))
        }
        OpKind::Concat => {
            let w = weights_for(r, 16);
            (
                vec![uniform(r, &[2, 3, 2]), uniform(r, &[2, 1, 2])],
                Box::new(move |t| weighted_sum(&ops::concat(&[&t[0], &t[1]], 1)?, &w)),
            )
        }
        OpKind::InstanceStats => {
            let wm = weights_for(r, 6);
            let ws = weights_for(r, 6);
            (
                vec![uniform(r, &[2, 3, 3, 3])],
                Box::new(move |t| {
                    let (m, s) = nn::instance_stats(&t[0], 1e-5)?;
                    ops::add(&weighted_sum(&m, &wm)?, &weighted_sum(&s, &ws)?)
                }),
            )
        }
        OpKind::AffinePerChannel => {
            let w = weights_for(r, 24);
            (
                vec![uniform(r, &[2, 3, 2, 2]), uniform(r, &[2, 3]), uniform(r, &[3])],
                Box::new(move |t| weighted_sum(&nn::affine_per_channel(&t[0], &t[1], &t[2])?, &w)),
            )
        }
        OpKind::L1Mean => {
            let a = uniform(r, &[10]);
            let d = off_kink(r, &[10]);
            let b = ops::add(&a, &d).expect("same shape");
            (vec![a, b], Box::new(|t| nn::l1_mean(&t[0], &t[1])))
        }
        OpKind::L2NormMean => (vec![uniform(r, &[3, 4])], Box::new(|t| nn::l2_norm_mean(&t[0]))),
        OpKind::SoftmaxXent => {
            let targets: Vec<usize> = (0..4).map(|_| r.random_range(0..3)).collect();
            (
                vec![uniform(r, &[4, 3])],
                Box::new(move |t| nn::softmax_xent(&t[0], &targets)),
            )
        }
        OpKind::Mean => (vec![uniform(r, &[2, 3])], Box::new(|t| nn::mean(&t[0]))),
        OpKind::InterpolatePair => {
            let u: Vec<f64> = (0..3).map(|_| r.random_range(0.0..1.0)).collect();
            let w = weights_for(r, 12);
            (
                vec![uniform(r, &[3, 2, 2]), uniform(r, &[3, 2, 2])],
                Box::new(move |t| weighted_sum(&nn::interpolate_pair(&t[0], &t[1], &u)?, &w)),
            )
        }
    };
    OpCase { kind, inputs, eval }
}

/// Runs [`finite_diff_grad_check`] on `points` seeded instances of `kind`.
pub fn check_op(kind: OpKind, points: usize, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut total = GradCheckReport::default();
    for p in 0..points {
        let case = op_case(kind, cfg.seed.wrapping_add(p as u64));
        total.merge(finite_diff_grad_check(&case.eval, &case.inputs, cfg)?);
    }
    Ok(total)
}
