//! Raw slice kernels shared by the forward and backward passes.

use crate::error::{Error, Result};

/// `out[m×n] += a[m×k] · b[k×n]`
pub(crate) fn matmul_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        let arow = &a[i * k..(i + 1) * k];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out[m×k] += g[m×n] · b[k×n]ᵀ`
pub(crate) fn matmul_bt_acc(g: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            out[i * k + p] += dot(grow, brow);
        }
    }
}

/// `out[k×n] += a[m×k]ᵀ · g[m×n]`
pub(crate) fn matmul_at_acc(a: &[f64], g: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
}

/// Four independent partial sums so the loop vectorizes; the summation
/// order is fixed, so results stay bit-reproducible.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Geometry of a strided 1-D convolution along the time axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub t_in: usize,
    pub t_out: usize,
    pub k: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub stride: usize,
    pub pad: usize,
}

/// `y[t', co] = Σ_j Σ_ci x[t'·s + j − p, ci] · w[j, ci, co]`
pub(crate) fn conv_forward(x: &[f64], w: &[f64], g: ConvGeom) -> Vec<f64> {
    let mut y = vec![0.0; g.t_out * g.c_out];
    for to in 0..g.t_out {
        let yrow = &mut y[to * g.c_out..(to + 1) * g.c_out];
        for j in 0..g.k {
            let Some(ti) = (to * g.stride + j).checked_sub(g.pad) else {
                continue;
            };
            if ti >= g.t_in {
                continue;
            }
            let xrow = &x[ti * g.c_in..(ti + 1) * g.c_in];
            let wj = &w[j * g.c_in * g.c_out..(j + 1) * g.c_in * g.c_out];
            for (ci, &xv) in xrow.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                let wrow = &wj[ci * g.c_out..(ci + 1) * g.c_out];
                for (yv, &wv) in yrow.iter_mut().zip(wrow) {
                    *yv += xv * wv;
                }
            }
        }
    }
    y
}

/// Accumulates the input and weight gradients of [`conv_forward`].
pub(crate) fn conv_backward(
    x: &[f64],
    w: &[f64],
    gy: &[f64],
    g: ConvGeom,
    mut gx: Option<&mut [f64]>,
    mut gw: Option<&mut [f64]>,
) {
    for to in 0..g.t_out {
        let grow = &gy[to * g.c_out..(to + 1) * g.c_out];
        for j in 0..g.k {
            let Some(ti) = (to * g.stride + j).checked_sub(g.pad) else {
                continue;
            };
            if ti >= g.t_in {
                continue;
            }
            let wj = &w[j * g.c_in * g.c_out..(j + 1) * g.c_in * g.c_out];
            if let Some(gx) = gx.as_deref_mut() {
                let gxrow = &mut gx[ti * g.c_in..(ti + 1) * g.c_in];
                for (ci, gxv) in gxrow.iter_mut().enumerate() {
                    *gxv += dot(grow, &wj[ci * g.c_out..(ci + 1) * g.c_out]);
                }
            }
            if let Some(gw) = gw.as_deref_mut() {
                let xrow = &x[ti * g.c_in..(ti + 1) * g.c_in];
                let gwj = &mut gw[j * g.c_in * g.c_out..(j + 1) * g.c_in * g.c_out];
                for (ci, &xv) in xrow.iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    let gwrow = &mut gwj[ci * g.c_out..(ci + 1) * g.c_out];
                    for (gwv, &gv) in gwrow.iter_mut().zip(grow) {
                        *gwv += xv * gv;
                    }
                }
            }
        }
    }
}

/// Transposed convolution: the exact adjoint of [`conv_forward`] with the
/// same weight. Here `g.t_in`/`g.c_in` describe the *output* (long) side and
/// `g.t_out`/`g.c_out` the input (short) side, mirroring the forward conv.
///
/// `y[t, ci] = Σ_{t', j : t'·s + j − p = t} Σ_co x[t', co] · w[j, ci, co]`
pub(crate) fn conv_transpose_forward(x: &[f64], w: &[f64], g: ConvGeom) -> Vec<f64> {
    let mut y = vec![0.0; g.t_in * g.c_in];
    conv_backward(&[], w, x, g, Some(&mut y), None);
    y
}

pub(crate) fn conv_transpose_backward(
    x: &[f64],
    w: &[f64],
    gy: &[f64],
    g: ConvGeom,
    gx: Option<&mut [f64]>,
    gw: Option<&mut [f64]>,
) {
    // The adjoint of the adjoint is the forward conv applied to gy.
    if let Some(gx) = gx {
        let fwd = conv_forward(gy, w, g);
        for (a, b) in gx.iter_mut().zip(fwd) {
            *a += b;
        }
    }
    if let Some(gw) = gw {
        // dw[j, ci, co] += Σ_{t'} gy[t'·s + j − p, ci] · x[t', co]
        conv_backward(gy, w, x, g, None, Some(gw));
    }
}

pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return Err(Error::shape("broadcast", format!("{a:?} vs {b:?}"))),
        };
    }
    Ok(out)
}

/// For every element of `out_shape` (row-major) the flat offset of the
/// broadcast source element in an array of shape `in_shape`.
pub(crate) fn broadcast_offsets(out_shape: &[usize], in_shape: &[usize]) -> Vec<usize> {
    let rank = out_shape.len();
    let lead = rank - in_shape.len();
    let mut strides = vec![0usize; rank];
    let mut s = 1;
    for i in (0..in_shape.len()).rev() {
        strides[lead + i] = if in_shape[i] == 1 { 0 } else { s };
        s *= in_shape[i];
    }
    let n: usize = out_shape.iter().product();
    let mut offsets = Vec::with_capacity(n);
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for _ in 0..n {
        offsets.push(off);
        for d in (0..rank).rev() {
            idx[d] += 1;
            off += strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            off -= strides[d] * idx[d];
            idx[d] = 0;
        }
    }
    offsets
}

pub(crate) const GELU_COEF: f64 = 0.044715;
const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

/// tanh-approximated GELU.
pub(crate) fn gelu(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_COEF * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_COEF * x * x * x);
    let th = u.tanh();
    let du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_COEF * x * x);
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du
}

/// `(outer, len, inner)` decomposition of a shape around `axis`.
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(crate) fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}
