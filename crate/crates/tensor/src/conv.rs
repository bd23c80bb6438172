//! 2-D convolution and its two adjoints.
//!
//! `conv2d`, `conv_transpose2d` and `conv2d_weight_grad` are closed under
//! differentiation: the backward rules of each are written with the other
//! two, which is what makes second-order gradients through a convolutional
//! critic possible.

use crate::error::{shape_err, Result};
use crate::ops::gemm;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn ckk(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn ohw(&self) -> usize {
        self.oh * self.ow
    }
}

/// Output size of a convolution along one axis.
pub fn conv_out_size(size: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = size + 2 * pad;
    if stride == 0 || padded < k {
        return None;
    }
    Some((padded - k) / stride + 1)
}

fn im2col(x: &[f64], g: &Geometry, cols: &mut [f64]) {
    let ohw = g.ohw();
    for c in 0..g.c {
        for p in 0..g.kh {
            for q in 0..g.kw {
                let row = (c * g.kh + p) * g.kw + q;
                let dst = &mut cols[row * ohw..(row + 1) * ohw];
                for i in 0..g.oh {
                    let y = (i * g.stride + p) as isize - g.pad as isize;
                    for j in 0..g.ow {
                        let xx = (j * g.stride + q) as isize - g.pad as isize;
                        dst[i * g.ow + j] = if y >= 0 && xx >= 0 && (y as usize) < g.h && (xx as usize) < g.w {
                            x[(c * g.h + y as usize) * g.w + xx as usize]
                        } else {
                            0.0
                        };
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], g: &Geometry, x: &mut [f64]) {
    let ohw = g.ohw();
    for c in 0..g.c {
        for p in 0..g.kh {
            for q in 0..g.kw {
                let row = (c * g.kh + p) * g.kw + q;
                let src = &cols[row * ohw..(row + 1) * ohw];
                for i in 0..g.oh {
                    let y = (i * g.stride + p) as isize - g.pad as isize;
                    if y < 0 || y as usize >= g.h {
                        continue;
                    }
                    for j in 0..g.ow {
                        let xx = (j * g.stride + q) as isize - g.pad as isize;
                        if xx >= 0 && (xx as usize) < g.w {
                            x[(c * g.h + y as usize) * g.w + xx as usize] += src[i * g.ow + j];
                        }
                    }
                }
            }
        }
    }
}

fn forward_raw(x: &[f64], n: usize, w: &[f64], o: usize, g: &Geometry) -> Vec<f64> {
    let (ckk, ohw) = (g.ckk(), g.ohw());
    let mut cols = vec![0.0; ckk * ohw];
    let mut out = vec![0.0; n * o * ohw];
    let in_sz = g.c * g.h * g.w;
    for s in 0..n {
        im2col(&x[s * in_sz..(s + 1) * in_sz], g, &mut cols);
        gemm(o, ckk, ohw, w, (ckk, 1), &cols, (ohw, 1), 0.0, &mut out[s * o * ohw..(s + 1) * o * ohw], (ohw, 1));
    }
    out
}

fn transpose_raw(y: &[f64], n: usize, w: &[f64], o: usize, g: &Geometry) -> Vec<f64> {
    let (ckk, ohw) = (g.ckk(), g.ohw());
    let in_sz = g.c * g.h * g.w;
    let mut cols = vec![0.0; ckk * ohw];
    let mut out = vec![0.0; n * in_sz];
    for s in 0..n {
        gemm(ckk, o, ohw, w, (1, ckk), &y[s * o * ohw..(s + 1) * o * ohw], (ohw, 1), 0.0, &mut cols, (ohw, 1));
        col2im(&cols, g, &mut out[s * in_sz..(s + 1) * in_sz]);
    }
    out
}

fn weight_grad_raw(x: &[f64], gy: &[f64], n: usize, o: usize, g: &Geometry) -> Vec<f64> {
    let (ckk, ohw) = (g.ckk(), g.ohw());
    let in_sz = g.c * g.h * g.w;
    let mut cols = vec![0.0; ckk * ohw];
    let mut out = vec![0.0; o * ckk];
    for s in 0..n {
        im2col(&x[s * in_sz..(s + 1) * in_sz], g, &mut cols);
        gemm(o, ohw, ckk, &gy[s * o * ohw..(s + 1) * o * ohw], (ohw, 1), &cols, (1, ohw), 1.0, &mut out, (ckk, 1));
    }
    out
}

/// Cross-correlation of `x: (N, C, H, W)` with `w: (O, C, kh, kw)`.
/// Output spatial size is `⌊(H + 2·pad − kh) / stride⌋ + 1`.
pub fn conv2d(x: &Tensor, w: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    if x.ndim() != 4 || w.ndim() != 4 || x.shape()[1] != w.shape()[1] {
        return shape_err("conv2d", format!("input {:?}, kernel {:?}", x.shape(), w.shape()));
    }
    let (n, c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (o, kh, kw) = (w.shape()[0], w.shape()[2], w.shape()[3]);
    let (Some(oh), Some(ow)) = (conv_out_size(h, kh, stride, pad), conv_out_size(wd, kw, stride, pad)) else {
        return shape_err("conv2d", format!("kernel {kh}x{kw} stride {stride} pad {pad} on {h}x{wd}"));
    };
    let g = Geometry { c, h, w: wd, kh, kw, stride, pad, oh, ow };
    let out = forward_raw(x.data(), n, w.data(), o, &g);
    Ok(Tensor::from_op(
        out,
        vec![n, o, oh, ow],
        "conv2d",
        &[x, w],
        Box::new(move |gy, inp, need| {
            let gx = if need[0] {
                Some(conv_transpose2d(gy, &inp[1], stride, pad, Some((h, wd)))?)
            } else {
                None
            };
            let gw = if need[1] {
                Some(conv2d_weight_grad(&inp[0], gy, kh, kw, stride, pad)?)
            } else {
                None
            };
            Ok(vec![gx, gw])
        }),
    ))
}

/// Adjoint of [`conv2d`] with respect to its input: maps `(N, O, h, w)` to
/// `(N, C, H, W)` using a kernel laid out `(O, C, kh, kw)`. When
/// `out_hw` is `None` the output size is `(h − 1)·stride − 2·pad + k`.
pub fn conv_transpose2d(
    y: &Tensor,
    w: &Tensor,
    stride: usize,
    pad: usize,
    out_hw: Option<(usize, usize)>,
) -> Result<Tensor> {
    if y.ndim() != 4 || w.ndim() != 4 || y.shape()[1] != w.shape()[0] {
        return shape_err("conv_transpose2d", format!("input {:?}, kernel {:?}", y.shape(), w.shape()));
    }
    let (n, o, oh, ow) = (y.shape()[0], y.shape()[1], y.shape()[2], y.shape()[3]);
    let (c, kh, kw) = (w.shape()[1], w.shape()[2], w.shape()[3]);
    let (h, wd) = match out_hw {
        Some(hw) => hw,
        None => {
            let full = |i: usize, k: usize| ((i - 1) * stride + k).checked_sub(2 * pad);
            match (full(oh, kh), full(ow, kw)) {
                (Some(h), Some(wd)) if oh > 0 && ow > 0 => (h, wd),
                _ => return shape_err("conv_transpose2d", format!("degenerate output for {:?}", y.shape())),
            }
        }
    };
    if conv_out_size(h, kh, stride, pad) != Some(oh) || conv_out_size(wd, kw, stride, pad) != Some(ow) {
        return shape_err("conv_transpose2d", format!("output {h}x{wd} inconsistent with input {oh}x{ow}"));
    }
    let g = Geometry { c, h, w: wd, kh, kw, stride, pad, oh, ow };
    let out = transpose_raw(y.data(), n, w.data(), o, &g);
    Ok(Tensor::from_op(
        out,
        vec![n, c, h, wd],
        "conv_transpose2d",
        &[y, w],
        Box::new(move |gx, inp, need| {
            let gy = if need[0] { Some(conv2d(gx, &inp[1], stride, pad)?) } else { None };
            let gw = if need[1] {
                Some(conv2d_weight_grad(gx, &inp[0], kh, kw, stride, pad)?)
            } else {
                None
            };
            Ok(vec![gy, gw])
        }),
    ))
}

/// Gradient of `conv2d(x, w)` with respect to `w`, given the output
/// gradient `gy`. Bilinear in `(x, gy)`.
pub fn conv2d_weight_grad(
    x: &Tensor,
    gy: &Tensor,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    if x.ndim() != 4 || gy.ndim() != 4 || x.shape()[0] != gy.shape()[0] {
        return shape_err("conv2d_weight_grad", format!("input {:?}, grad {:?}", x.shape(), gy.shape()));
    }
    let (n, c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (o, oh, ow) = (gy.shape()[1], gy.shape()[2], gy.shape()[3]);
    if conv_out_size(h, kh, stride, pad) != Some(oh) || conv_out_size(wd, kw, stride, pad) != Some(ow) {
        return shape_err("conv2d_weight_grad", format!("grad {:?} inconsistent with input {:?}", gy.shape(), x.shape()));
    }
    let g = Geometry { c, h, w: wd, kh, kw, stride, pad, oh, ow };
    let out = weight_grad_raw(x.data(), gy.data(), n, o, &g);
    Ok(Tensor::from_op(
        out,
        vec![o, c, kh, kw],
        "conv2d_weight_grad",
        &[x, gy],
        Box::new(move |gw, inp, need| {
            let gx = if need[0] {
                Some(conv_transpose2d(&inp[1], gw, stride, pad, Some((h, wd)))?)
            } else {
                None
            };
            let ggy = if need[1] { Some(conv2d(&inp[0], gw, stride, pad)?) } else { None };
            Ok(vec![gx, ggy])
        }),
    ))
}
