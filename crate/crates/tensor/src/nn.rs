//! Layer-level ops built from the primitives.

use std::rc::Rc;

use crate::conv;
use crate::error::{arg_err, shape_err, Result};
use crate::ops;
use crate::tensor::Tensor;

/// Slope used wherever the networks need a leaky activation.
pub const LEAKY_SLOPE: f64 = 0.01;

/// The op kinds the networks are assembled from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Conv2d,
    ConvTranspose2d,
    Dense,
    Relu,
    LeakyRelu,
    Tanh,
    Add,
    MulScalar,
    Concat,
    InstanceStats,
    AffinePerChannel,
    L1Mean,
    L2NormMean,
    SoftmaxXent,
    Mean,
    InterpolatePair,
}

impl OpKind {
    pub const ALL: [OpKind; 16] = [
        OpKind::Conv2d,
        OpKind::ConvTranspose2d,
        OpKind::Dense,
        OpKind::Relu,
        OpKind::LeakyRelu,
        OpKind::Tanh,
        OpKind::Add,
        OpKind::MulScalar,
        OpKind::Concat,
        OpKind::InstanceStats,
        OpKind::AffinePerChannel,
        OpKind::L1Mean,
        OpKind::L2NormMean,
        OpKind::SoftmaxXent,
        OpKind::Mean,
        OpKind::InterpolatePair,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Conv2d => "conv2d",
            OpKind::ConvTranspose2d => "conv_transpose2d",
            OpKind::Dense => "dense",
            OpKind::Relu => "relu",
            OpKind::LeakyRelu => "leaky_relu",
            OpKind::Tanh => "tanh",
            OpKind::Add => "add",
            OpKind::MulScalar => "mul_scalar",
            OpKind::Concat => "concat",
            OpKind::InstanceStats => "instance_stats",
            OpKind::AffinePerChannel => "affine_per_channel",
            OpKind::L1Mean => "l1_mean",
            OpKind::L2NormMean => "l2_norm_mean",
            OpKind::SoftmaxXent => "softmax_xent",
            OpKind::Mean => "mean",
            OpKind::InterpolatePair => "interpolate_pair",
        }
    }
}

fn expect_4d(op: &'static str, x: &Tensor) -> Result<(usize, usize, usize, usize)> {
    match *x.shape() {
        [n, c, h, w] => Ok((n, c, h, w)),
        _ => shape_err(op, format!("expected (N, C, H, W), got {:?}", x.shape())),
    }
}

/// Expands a per-channel `(C)` or per-sample-per-channel `(N, C)` tensor to
/// `(N, C, H, W)`.
pub fn expand_channels(t: &Tensor, n: usize, h: usize, w: usize) -> Result<Tensor> {
    let nc = match *t.shape() {
        [_] => ops::broadcast_axis(t, 0, n)?,
        [tn, _] if tn == n => t.clone(),
        _ => return shape_err("expand_channels", format!("{:?} for batch {n}", t.shape())),
    };
    let c = nc.shape()[1];
    let spread = ops::broadcast_axis(&ops::reshape(&nc, &[n * c])?, 1, h * w)?;
    ops::reshape(&spread, &[n, c, h, w])
}

/// Convolution with optional per-output-channel bias.
pub fn conv2d(x: &Tensor, w: &Tensor, b: Option<&Tensor>, stride: usize, pad: usize) -> Result<Tensor> {
    let y = conv::conv2d(x, w, stride, pad)?;
    add_bias(y, b)
}

/// Transposed convolution (`w` laid out `(C_in, C_out, kh, kw)`) with optional bias.
pub fn conv_transpose2d(x: &Tensor, w: &Tensor, b: Option<&Tensor>, stride: usize, pad: usize) -> Result<Tensor> {
    let y = conv::conv_transpose2d(x, w, stride, pad, None)?;
    add_bias(y, b)
}

fn add_bias(y: Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    match b {
        None => Ok(y),
        Some(b) => {
            let (n, c, h, w) = expect_4d("bias", &y)?;
            if b.shape() != [c] {
                return shape_err("bias", format!("bias {:?} for {c} channels", b.shape()));
            }
            ops::add(&y, &expand_channels(b, n, h, w)?)
        }
    }
}

/// `x · wᵀ + b` with `x: (N, in)`, `w: (out, in)`, `b: (out)`.
pub fn dense(x: &Tensor, w: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    let y = ops::matmul(x, w, false, true)?;
    match b {
        None => Ok(y),
        Some(b) => {
            if b.shape() != [y.shape()[1]] {
                return shape_err("dense", format!("bias {:?} for output {:?}", b.shape(), y.shape()));
            }
            ops::add(&y, &ops::broadcast_axis(b, 0, y.shape()[0])?)
        }
    }
}

pub fn relu(x: &Tensor) -> Result<Tensor> {
    ops::leaky_relu(x, 0.0)
}

pub fn leaky_relu(x: &Tensor) -> Result<Tensor> {
    ops::leaky_relu(x, LEAKY_SLOPE)
}

/// Per-(sample, channel) spatial mean: `(N, C, H, W) -> (N, C)`.
pub fn spatial_mean(x: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = expect_4d("spatial_mean", x)?;
    let flat = ops::reshape(x, &[n, c, h * w])?;
    Ok(ops::mul_scalar(&ops::sum_axis(&flat, 2)?, 1.0 / (h * w) as f64))
}

/// Per-(sample, channel) spatial mean and `sqrt(population variance + eps)`.
///
/// With `eps = 0` the second output is the plain population std.
pub fn instance_stats(x: &Tensor, eps: f64) -> Result<(Tensor, Tensor)> {
    let (n, _, h, w) = expect_4d("instance_stats", x)?;
    if h * w < 2 {
        return arg_err("instance_stats", format!("spatial size {h}x{w} has degenerate statistics"));
    }
    let mean = spatial_mean(x)?;
    let centered = ops::sub(x, &expand_channels(&mean, n, h, w)?)?;
    let var = spatial_mean(&ops::mul(&centered, &centered)?)?;
    let std = ops::sqrt(&ops::add_scalar(&var, eps));
    Ok((mean, std))
}

/// `(x − μ(x)) / sqrt(var(x) + eps)` per sample and channel.
pub fn instance_normalize(x: &Tensor, eps: f64) -> Result<Tensor> {
    let (n, _, h, w) = expect_4d("instance_normalize", x)?;
    let (mean, std) = instance_stats(x, eps)?;
    let centered = ops::sub(x, &expand_channels(&mean, n, h, w)?)?;
    ops::mul(&centered, &expand_channels(&ops::recip(&std), n, h, w)?)
}

/// `x · scale + shift` with per-channel `(C)` or per-sample `(N, C)` parameters.
pub fn affine_per_channel(x: &Tensor, scale: &Tensor, shift: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = expect_4d("affine_per_channel", x)?;
    for p in [scale, shift] {
        let ok = p.shape() == [c] || p.shape() == [n, c];
        if !ok {
            return shape_err("affine_per_channel", format!("parameter {:?} for input {:?}", p.shape(), x.shape()));
        }
    }
    let scaled = ops::mul(x, &expand_channels(scale, n, h, w)?)?;
    ops::add(&scaled, &expand_channels(shift, n, h, w)?)
}

/// Mean absolute difference over all elements.
pub fn l1_mean(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    ops::mean(&ops::abs(&ops::sub(a, b)?)?)
}

/// Mean over the leading (batch) axis of each slice's Euclidean norm.
pub fn l2_norm_mean(x: &Tensor) -> Result<Tensor> {
    ops::mean(&ops::row_norms(x)?)
}

/// Mean over rows of `−log softmax(logits)[target]`.
pub fn softmax_xent(logits: &Tensor, targets: &[usize]) -> Result<Tensor> {
    let (n, k) = match *logits.shape() {
        [n, k] if n > 0 && k > 0 => (n, k),
        _ => return shape_err("softmax_xent", format!("logits {:?}", logits.shape())),
    };
    if targets.len() != n {
        return shape_err("softmax_xent", format!("{} targets for {n} rows", targets.len()));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= k) {
        return arg_err("softmax_xent", format!("target {t} out of range for {k} classes"));
    }
    // Row maxima are a constant shift; the loss is invariant to it.
    let maxes: Vec<f64> = logits
        .data()
        .chunks(k)
        .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let shift: Vec<f64> = maxes.iter().flat_map(|&m| std::iter::repeat_n(-m, k)).collect();
    let shifted = ops::add(logits, &Tensor::new(shift, &[n, k]))?;
    let lse = ops::log(&ops::sum_axis(&ops::exp(&shifted), 1)?);
    let mut onehot = vec![0.0; n * k];
    for (i, &t) in targets.iter().enumerate() {
        onehot[i * k + t] = 1.0;
    }
    let picked = ops::sum_axis(&ops::mul_const(&shifted, Rc::new(onehot))?, 1)?;
    ops::mean(&ops::sub(&lse, &picked)?)
}

/// Mean of all elements.
pub fn mean(x: &Tensor) -> Result<Tensor> {
    ops::mean(x)
}

/// `u_i · a_i + (1 − u_i) · b_i` for each sample `i` along the leading axis.
pub fn interpolate_pair(a: &Tensor, b: &Tensor, u: &[f64]) -> Result<Tensor> {
    if a.shape() != b.shape() || a.ndim() == 0 || a.shape()[0] != u.len() {
        return shape_err(
            "interpolate_pair",
            format!("{:?} / {:?} with {} weights", a.shape(), b.shape(), u.len()),
        );
    }
    let per = a.numel() / u.len();
    let wa: Vec<f64> = u.iter().flat_map(|&v| std::iter::repeat_n(v, per)).collect();
    let wb: Vec<f64> = wa.iter().map(|v| 1.0 - v).collect();
    ops::add(&ops::mul_const(a, Rc::new(wa))?, &ops::mul_const(b, Rc::new(wb))?)
}

pub use ops::{add, concat, mul_scalar, tanh};
