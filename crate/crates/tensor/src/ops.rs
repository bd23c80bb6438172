//! Primitive ops. Each backward rule is expressed through these same
//! primitives so gradients can be differentiated again.

use std::rc::Rc;

use crate::error::{arg_err, shape_err, Result};
use crate::kink;
use crate::tensor::Tensor;

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return shape_err(op, format!("{:?} vs {:?}", a.shape(), b.shape()));
    }
    Ok(())
}

fn split_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return arg_err(op, format!("axis {axis} out of range for {shape:?}"));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

fn map_unary(a: &Tensor, f: impl Fn(f64) -> f64) -> Vec<f64> {
    a.data().iter().map(|&v| f(v)).collect()
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("add", a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Ok(Tensor::from_op(
        data,
        a.shape().to_vec(),
        "add",
        &[a, b],
        Box::new(|g, _, _| Ok(vec![Some(g.clone()), Some(g.clone())])),
    ))
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("sub", a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
    Ok(Tensor::from_op(
        data,
        a.shape().to_vec(),
        "sub",
        &[a, b],
        Box::new(|g, _, need| {
            let gb = if need[1] { Some(mul_scalar(g, -1.0)) } else { None };
            Ok(vec![Some(g.clone()), gb])
        }),
    ))
}

/// Elementwise product.
pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("mul", a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    Ok(Tensor::from_op(
        data,
        a.shape().to_vec(),
        "mul",
        &[a, b],
        Box::new(|g, inp, need| {
            let ga = if need[0] { Some(mul(g, &inp[1])?) } else { None };
            let gb = if need[1] { Some(mul(g, &inp[0])?) } else { None };
            Ok(vec![ga, gb])
        }),
    ))
}

pub fn mul_scalar(a: &Tensor, c: f64) -> Tensor {
    Tensor::from_op(
        map_unary(a, |v| v * c),
        a.shape().to_vec(),
        "mul_scalar",
        &[a],
        Box::new(move |g, _, _| Ok(vec![Some(mul_scalar(g, c))])),
    )
}

pub fn add_scalar(a: &Tensor, c: f64) -> Tensor {
    Tensor::from_op(
        map_unary(a, |v| v + c),
        a.shape().to_vec(),
        "add_scalar",
        &[a],
        Box::new(|g, _, _| Ok(vec![Some(g.clone())])),
    )
}

/// Multiplies by a constant buffer of the same shape (no gradient flows
/// into the constant).
pub fn mul_const(a: &Tensor, c: Rc<Vec<f64>>) -> Result<Tensor> {
    if c.len() != a.numel() {
        return shape_err(
            "mul_const",
            format!("constant of length {} for shape {:?}", c.len(), a.shape()),
        );
    }
    let data = a.data().iter().zip(c.iter()).map(|(x, y)| x * y).collect();
    Ok(Tensor::from_op(
        data,
        a.shape().to_vec(),
        "mul_const",
        &[a],
        Box::new(move |g, _, _| Ok(vec![Some(mul_const(g, c.clone())?)])),
    ))
}

pub fn tanh(a: &Tensor) -> Tensor {
    Tensor::from_op(
        map_unary(a, f64::tanh),
        a.shape().to_vec(),
        "tanh",
        &[a],
        Box::new(|g, inp, _| {
            let t = tanh(&inp[0]);
            let d = add_scalar(&mul_scalar(&mul(&t, &t)?, -1.0), 1.0);
            Ok(vec![Some(mul(g, &d)?)])
        }),
    )
}

pub fn exp(a: &Tensor) -> Tensor {
    Tensor::from_op(
        map_unary(a, f64::exp),
        a.shape().to_vec(),
        "exp",
        &[a],
        Box::new(|g, inp, _| Ok(vec![Some(mul(g, &exp(&inp[0]))?)])),
    )
}

pub fn log(a: &Tensor) -> Tensor {
    Tensor::from_op(
        map_unary(a, f64::ln),
        a.shape().to_vec(),
        "log",
        &[a],
        Box::new(|g, inp, _| Ok(vec![Some(mul(g, &recip(&inp[0]))?)])),
    )
}

pub fn recip(a: &Tensor) -> Tensor {
    Tensor::from_op(
        map_unary(a, |v| 1.0 / v),
        a.shape().to_vec(),
        "recip",
        &[a],
        Box::new(|g, inp, _| {
            let r = recip(&inp[0]);
            Ok(vec![Some(mul(g, &mul_scalar(&mul(&r, &r)?, -1.0))?)])
        }),
    )
}

/// `1/x`, defined as 0 where `x == 0` (and likewise for its derivative).
pub fn recip_safe(a: &Tensor) -> Tensor {
    if kink::tracking() {
        kink::record(1, a.data().iter().map(|&v| (v == 0.0) as u8));
    }
    Tensor::from_op(
        map_unary(a, |v| if v == 0.0 { 0.0 } else { 1.0 / v }),
        a.shape().to_vec(),
        "recip_safe",
        &[a],
        Box::new(|g, inp, _| {
            let r = recip_safe(&inp[0]);
            Ok(vec![Some(mul(g, &mul_scalar(&mul(&r, &r)?, -1.0))?)])
        }),
    )
}

pub fn sqrt(a: &Tensor) -> Tensor {
    Tensor::from_op(
        map_unary(a, f64::sqrt),
        a.shape().to_vec(),
        "sqrt",
        &[a],
        Box::new(|g, inp, _| {
            let d = mul_scalar(&recip(&sqrt(&inp[0])), 0.5);
            Ok(vec![Some(mul(g, &d)?)])
        }),
    )
}

/// Absolute value; the subgradient at 0 is 0.
pub fn abs(a: &Tensor) -> Result<Tensor> {
    let sign: Vec<f64> = a.data().iter().map(|&v| sign_of(v)).collect();
    if kink::tracking() {
        kink::record(2, sign.iter().map(|&s| (s + 1.0) as u8));
    }
    let mask = Rc::new(sign);
    let data = map_unary(a, f64::abs);
    Ok(Tensor::from_op(
        data,
        a.shape().to_vec(),
        "abs",
        &[a],
        Box::new(move |g, _, _| Ok(vec![Some(mul_const(g, mask.clone())?)])),
    ))
}

fn sign_of(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `x` where `x > 0`, `slope * x` elsewhere. `slope = 0` is relu.
pub fn leaky_relu(a: &Tensor, slope: f64) -> Result<Tensor> {
    let mask: Vec<f64> = a
        .data()
        .iter()
        .map(|&v| if v > 0.0 { 1.0 } else { slope })
        .collect();
    if kink::tracking() {
        kink::record(3, a.data().iter().map(|&v| (v > 0.0) as u8));
    }
    let data = a.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
    let mask = Rc::new(mask);
    Ok(Tensor::from_op(
        data,
        a.shape().to_vec(),
        if slope == 0.0 { "relu" } else { "leaky_relu" },
        &[a],
        Box::new(move |g, _, _| Ok(vec![Some(mul_const(g, mask.clone())?)])),
    ))
}

pub fn reshape(a: &Tensor, shape: &[usize]) -> Result<Tensor> {
    if shape.iter().product::<usize>() != a.numel() {
        return shape_err("reshape", format!("{:?} -> {:?}", a.shape(), shape));
    }
    let from = a.shape().to_vec();
    Ok(Tensor::from_op(
        a.to_vec(),
        shape.to_vec(),
        "reshape",
        &[a],
        Box::new(move |g, _, _| Ok(vec![Some(reshape(g, &from)?)])),
    ))
}

/// Sums out `axis`, removing it from the shape.
pub fn sum_axis(a: &Tensor, axis: usize) -> Result<Tensor> {
    let (outer, n, inner) = split_axis("sum_axis", a.shape(), axis)?;
    let src = a.data();
    let mut out = vec![0.0; outer * inner];
    for o in 0..outer {
        for k in 0..n {
            let base = (o * n + k) * inner;
            let dst = &mut out[o * inner..(o + 1) * inner];
            dst.iter_mut()
                .zip(&src[base..base + inner])
                .for_each(|(d, s)| *d += s);
        }
    }
    let mut shape = a.shape().to_vec();
    shape.remove(axis);
    Ok(Tensor::from_op(
        out,
        shape,
        "sum_axis",
        &[a],
        Box::new(move |g, _, _| Ok(vec![Some(broadcast_axis(g, axis, n)?)])),
    ))
}

/// Inserts a new axis of length `n` at `axis`, repeating values along it.
pub fn broadcast_axis(a: &Tensor, axis: usize, n: usize) -> Result<Tensor> {
    if axis > a.ndim() {
        return arg_err("broadcast_axis", format!("axis {axis} for {:?}", a.shape()));
    }
    let outer: usize = a.shape()[..axis].iter().product();
    let inner: usize = a.shape()[axis..].iter().product();
    let src = a.data();
    let mut out = Vec::with_capacity(outer * n * inner);
    for o in 0..outer {
        let chunk = &src[o * inner..(o + 1) * inner];
        for _ in 0..n {
            out.extend_from_slice(chunk);
        }
    }
    let mut shape = a.shape().to_vec();
    shape.insert(axis, n);
    Ok(Tensor::from_op(
        out,
        shape,
        "broadcast_axis",
        &[a],
        Box::new(move |g, _, _| Ok(vec![Some(sum_axis(g, axis)?)])),
    ))
}

/// Sum of all elements as a 0-d tensor.
pub fn sum_all(a: &Tensor) -> Result<Tensor> {
    sum_axis(&reshape(a, &[a.numel()])?, 0)
}

/// Mean of all elements as a 0-d tensor.
pub fn mean(a: &Tensor) -> Result<Tensor> {
    if a.numel() == 0 {
        return arg_err("mean", "empty tensor");
    }
    Ok(mul_scalar(&sum_all(a)?, 1.0 / a.numel() as f64))
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    assert!(k == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    assert!((m - 1) * rsc + (n - 1) * csc < c.len());
    // SAFETY: the asserts above bound every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// `op(a) · op(b)` for 2-D tensors, where `op` transposes when the flag is set.
pub fn matmul(a: &Tensor, b: &Tensor, ta: bool, tb: bool) -> Result<Tensor> {
    if a.ndim() != 2 || b.ndim() != 2 {
        return shape_err("matmul", format!("{:?} x {:?}", a.shape(), b.shape()));
    }
    let (ar, ac) = (a.shape()[0], a.shape()[1]);
    let (br, bc) = (b.shape()[0], b.shape()[1]);
    let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
    let (k2, n) = if tb { (bc, br) } else { (br, bc) };
    if k != k2 {
        return shape_err(
            "matmul",
            format!("{:?}{} x {:?}{}", a.shape(), if ta { "ᵀ" } else { "" }, b.shape(), if tb { "ᵀ" } else { "" }),
        );
    }
    let sa = if ta { (1, ac) } else { (ac, 1) };
    let sb = if tb { (1, bc) } else { (bc, 1) };
    let mut out = vec![0.0; m * n];
    gemm(m, k, n, a.data(), sa, b.data(), sb, 0.0, &mut out, (n, 1));
    Ok(Tensor::from_op(
        out,
        vec![m, n],
        "matmul",
        &[a, b],
        Box::new(move |g, inp, need| {
            let (a, b) = (&inp[0], &inp[1]);
            let ga = if !need[0] {
                None
            } else if !ta {
                Some(matmul(g, b, false, !tb)?)
            } else {
                Some(matmul(b, g, tb, true)?)
            };
            let gb = if !need[1] {
                None
            } else if !tb {
                Some(matmul(a, g, !ta, false)?)
            } else {
                Some(matmul(g, a, true, ta)?)
            };
            Ok(vec![ga, gb])
        }),
    ))
}

/// Concatenates along `axis`; all other dimensions must agree.
pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
    let Some(first) = parts.first() else {
        return arg_err("concat", "no inputs");
    };
    let nd = first.ndim();
    if axis >= nd {
        return arg_err("concat", format!("axis {axis} for {:?}", first.shape()));
    }
    for p in parts {
        let ok = p.ndim() == nd
            && (0..nd).all(|i| i == axis || p.shape()[i] == first.shape()[i]);
        if !ok {
            return shape_err("concat", format!("{:?} vs {:?} on axis {axis}", first.shape(), p.shape()));
        }
    }
    let outer: usize = first.shape()[..axis].iter().product();
    let inner: usize = first.shape()[axis + 1..].iter().product();
    let lens: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
    let total: usize = lens.iter().sum();
    let mut out = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for (p, &len) in parts.iter().zip(&lens) {
            out.extend_from_slice(&p.data()[o * len * inner..(o + 1) * len * inner]);
        }
    }
    let mut shape = first.shape().to_vec();
    shape[axis] = total;
    Ok(Tensor::from_op(
        out,
        shape,
        "concat",
        parts,
        Box::new(move |g, _, need| {
            let mut start = 0;
            let mut res = Vec::with_capacity(lens.len());
            for (&len, &n) in lens.iter().zip(need) {
                res.push(if n { Some(narrow(g, axis, start, len)?) } else { None });
                start += len;
            }
            Ok(res)
        }),
    ))
}

/// Slice `[start, start + len)` along `axis`.
pub fn narrow(a: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
    let (outer, n, inner) = split_axis("narrow", a.shape(), axis)?;
    if start + len > n || len == 0 {
        return arg_err("narrow", format!("[{start}, {}) of axis length {n}", start + len));
    }
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = (o * n + start) * inner;
        out.extend_from_slice(&a.data()[base..base + len * inner]);
    }
    let mut shape = a.shape().to_vec();
    shape[axis] = len;
    let full = a.shape().to_vec();
    Ok(Tensor::from_op(
        out,
        shape,
        "narrow",
        &[a],
        Box::new(move |g, _, _| {
            let mut pieces = Vec::new();
            if start > 0 {
                let mut s = full.clone();
                s[axis] = start;
                pieces.push(Tensor::zeros(&s));
            }
            pieces.push(g.clone());
            if start + len < n {
                let mut s = full.clone();
                s[axis] = n - start - len;
                pieces.push(Tensor::zeros(&s));
            }
            let refs: Vec<&Tensor> = pieces.iter().collect();
            Ok(vec![Some(concat(&refs, axis)?)])
        }),
    ))
}

/// Euclidean norm of each slice along the leading axis: `(N, ...) -> (N)`.
/// The gradient at a zero row is defined as zero.
pub fn row_norms(a: &Tensor) -> Result<Tensor> {
    if a.ndim() == 0 || a.shape()[0] == 0 {
        return arg_err("row_norms", format!("shape {:?}", a.shape()));
    }
    let n = a.shape()[0];
    let width = a.numel() / n;
    let norms: Vec<f64> = a
        .data()
        .chunks(width.max(1))
        .map(|row| row.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    if kink::tracking() {
        kink::record(4, norms.iter().map(|&v| (v == 0.0) as u8));
    }
    Ok(Tensor::from_op(
        norms,
        vec![n],
        "row_norms",
        &[a],
        Box::new(move |g, inp, _| {
            let x = &inp[0];
            let coef = mul(g, &recip_safe(&row_norms(x)?))?;
            let expanded = broadcast_axis(&reshape(&coef, &[n])?, 1, width)?;
            Ok(vec![Some(mul(&reshape(&expanded, x.shape())?, x)?)])
        }),
    ))
}
