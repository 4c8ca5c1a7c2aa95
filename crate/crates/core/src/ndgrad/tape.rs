use std::cell::{Cell, RefCell};

use super::array::Array;
use super::kernels::{self, ConvGeom};
use crate::error::{Error, Result};

/// Half-open frame range `[start, end)`.
pub type Span = (usize, usize);

/// Time-axis padding mode of [`Var::temporal_conv`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// `(k − 1) / 2` zeros on both sides; output length `ceil(T / stride)`.
    Same,
    /// No padding; output length `floor((T − k) / stride) + 1`.
    Valid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Relu,
    Gelu,
    Log,
    Exp,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Unary(usize, Unary),
    Softmax(usize, usize),
    LogSoftmax(usize, usize),
    Conv { x: usize, w: usize, geom: ConvGeom },
    ConvTranspose { x: usize, w: usize, geom: ConvGeom },
    PoolMean { x: usize, spans: Vec<Span> },
    Transpose(usize),
    Concat(Vec<usize>),
    Sum(usize),
    Mean(usize),
    GatherRows { x: usize, index: Vec<usize> },
    Reshape(usize),
    ScalarFn { x: usize, grad: Array },
}

struct Node {
    value: Array,
    tracked: bool,
    op: Op,
}

/// Record of executed primitives for one forward/backward pass.
///
/// A tape is single-threaded; run independent samples on independent tapes.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    consumed: Cell<bool>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}({:?})", self.id, self.value())
    }
}

/// Gradients of a scalar loss with respect to every tracked leaf.
pub struct Gradients {
    grads: Vec<Option<Array>>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&Array> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    /// Gradient of a leaf; panics when `var` is not a tracked leaf.
    pub fn wrt(&self, var: Var<'_>) -> &Array {
        self.get(var).expect("no gradient for this variable")
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Clears all recorded nodes so the tape can be reused.
    pub fn reset(&mut self) {
        self.nodes.get_mut().clear();
        self.consumed.set(false);
    }

    /// Gradient-tracked leaf.
    pub fn leaf(&self, value: Array) -> Var<'_> {
        self.push(value, true, Op::Leaf)
    }

    /// Untracked leaf: no gradient flows into it.
    pub fn constant(&self, value: Array) -> Var<'_> {
        self.push(value, false, Op::Leaf)
    }

    fn push(&self, value: Array, tracked: bool, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, tracked, op });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn record(&self, op_name: &'static str, value: Array, inputs: &[usize], op: Op) -> Result<Var<'_>> {
        if !value.all_finite() {
            return Err(Error::NonFinite { op: op_name });
        }
        let tracked = {
            let nodes = self.nodes.borrow();
            inputs.iter().any(|&i| nodes[i].tracked)
        };
        Ok(self.push(value, tracked, op))
    }

    fn value_of(&self, id: usize) -> Array {
        self.nodes.borrow()[id].value.clone()
    }

    /// Concatenates 2-D variables along the column axis.
    pub fn concat_cols<'t>(&'t self, parts: &[Var<'t>]) -> Result<Var<'t>> {
        let first = parts.first().ok_or(Error::Empty { op: "concat" })?;
        let rows = first.value().rows();
        let vals: Vec<Array> = parts.iter().map(Var::value).collect();
        if vals.iter().any(|v| v.rank() != 2 || v.rows() != rows) {
            return Err(Error::shape(
                "concat",
                format!("{:?}", vals.iter().map(|v| v.shape().to_vec()).collect::<Vec<_>>()),
            ));
        }
        let total: usize = vals.iter().map(Array::cols).sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for v in &vals {
                out.extend_from_slice(v.row(r));
            }
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        self.record(
            "concat",
            Array::new(&[rows, total], out)?,
            &ids,
            Op::Concat(ids.clone()),
        )
    }

    /// Records a scalar-valued function of `x` whose gradient was computed
    /// alongside its value (used by losses with closed-form gradients).
    pub fn scalar_fn<'t>(&'t self, x: Var<'t>, value: f64, grad: Array) -> Result<Var<'t>> {
        if grad.shape() != x.value().shape() {
            return Err(Error::shape("scalar_fn", "gradient shape differs from input"));
        }
        if !grad.all_finite() {
            return Err(Error::NonFinite { op: "scalar_fn" });
        }
        self.record(
            "scalar_fn",
            Array::scalar(value),
            &[x.id],
            Op::ScalarFn { x: x.id, grad },
        )
    }

    /// Reverse pass from a scalar loss. Visits nodes in exact reverse
    /// execution order; may be called once per tape (see [`Tape::reset`]).
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        if self.consumed.get() {
            return Err(Error::AlreadyBackpropagated);
        }
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.len() != 1 {
            return Err(Error::NotScalar(root.value.shape().to_vec()));
        }
        if !root.tracked {
            return Err(Error::Detached);
        }
        self.consumed.set(true);

        let mut grads: Vec<Option<Vec<f64>>> = (0..=loss.id).map(|_| None).collect();
        grads[loss.id] = Some(vec![1.0]);

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.tracked {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            if matches!(node.op, Op::Leaf) {
                grads[id] = Some(g);
                continue;
            }
            backprop_node(&nodes, node, &g, &mut grads);
        }

        let out = nodes
            .iter()
            .enumerate()
            .map(|(id, n)| {
                if !(n.tracked && matches!(n.op, Op::Leaf)) {
                    return None;
                }
                let data = grads
                    .get_mut(id)
                    .and_then(Option::take)
                    .unwrap_or_else(|| vec![0.0; n.value.len()]);
                Some(Array::new(n.value.shape(), data).expect("gradient shape"))
            })
            .collect();
        Ok(Gradients { grads: out })
    }
}

fn acc<'g>(grads: &'g mut [Option<Vec<f64>>], nodes: &[Node], id: usize) -> Option<&'g mut Vec<f64>> {
    if !nodes[id].tracked {
        return None;
    }
    let n = nodes[id].value.len();
    Some(grads[id].get_or_insert_with(|| vec![0.0; n]))
}

fn backprop_node(nodes: &[Node], node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let val = |id: usize| &nodes[id].value;
    match &node.op {
        Op::Leaf => {}
        &Op::MatMul(a, b) => {
            let (av, bv) = (val(a), val(b));
            let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
            if let Some(ga) = acc(grads, nodes, a) {
                kernels::matmul_bt_acc(g, bv.data(), ga, m, k, n);
            }
            if let Some(gb) = acc(grads, nodes, b) {
                kernels::matmul_at_acc(av.data(), g, gb, m, k, n);
            }
        }
        &Op::Add(a, b) | &Op::Sub(a, b) => {
            let sign_b = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
            for (id, sign) in [(a, 1.0), (b, sign_b)] {
                let in_shape = val(id).shape().to_vec();
                if let Some(gi) = acc(grads, nodes, id) {
                    if in_shape == node.value.shape() {
                        for (x, &gv) in gi.iter_mut().zip(g) {
                            *x += sign * gv;
                        }
                    } else {
                        let offs = kernels::broadcast_offsets(node.value.shape(), &in_shape);
                        for (&o, &gv) in offs.iter().zip(g) {
                            gi[o] += sign * gv;
                        }
                    }
                }
            }
        }
        &Op::Mul(a, b) => {
            for (id, other) in [(a, b), (b, a)] {
                let in_shape = val(id).shape().to_vec();
                let ov = val(other).clone();
                if let Some(gi) = acc(grads, nodes, id) {
                    let out_shape = node.value.shape();
                    let offs_other = kernels::broadcast_offsets(out_shape, ov.shape());
                    if in_shape == out_shape {
                        for ((x, &gv), &oo) in gi.iter_mut().zip(g).zip(&offs_other) {
                            *x += gv * ov.data()[oo];
                        }
                    } else {
                        let offs = kernels::broadcast_offsets(out_shape, &in_shape);
                        for ((&o, &gv), &oo) in offs.iter().zip(g).zip(&offs_other) {
                            gi[o] += gv * ov.data()[oo];
                        }
                    }
                }
            }
        }
        &Op::Scale(a, c) => {
            if let Some(ga) = acc(grads, nodes, a) {
                for (x, &gv) in ga.iter_mut().zip(g) {
                    *x += c * gv;
                }
            }
        }
        &Op::Unary(a, kind) => {
            let xv = val(a).clone();
            let yv = &node.value;
            if let Some(ga) = acc(grads, nodes, a) {
                for (i, (x, &gv)) in ga.iter_mut().zip(g).enumerate() {
                    let xi = xv.data()[i];
                    let d = match kind {
                        Unary::Relu => {
                            if xi > 0.0 {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        Unary::Gelu => kernels::gelu_grad(xi),
                        Unary::Log => 1.0 / xi,
                        Unary::Exp => yv.data()[i],
                    };
                    *x += gv * d;
                }
            }
        }
        &Op::Softmax(a, axis) => {
            let y = node.value.clone();
            let (outer, len, inner) = kernels::axis_split(y.shape(), axis);
            if let Some(ga) = acc(grads, nodes, a) {
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |d: usize| (o * len + d) * inner + i;
                        let s: f64 = (0..len).map(|d| g[idx(d)] * y.data()[idx(d)]).sum();
                        for d in 0..len {
                            ga[idx(d)] += y.data()[idx(d)] * (g[idx(d)] - s);
                        }
                    }
                }
            }
        }
        &Op::LogSoftmax(a, axis) => {
            let y = node.value.clone();
            let (outer, len, inner) = kernels::axis_split(y.shape(), axis);
            if let Some(ga) = acc(grads, nodes, a) {
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |d: usize| (o * len + d) * inner + i;
                        let s: f64 = (0..len).map(|d| g[idx(d)]).sum();
                        for d in 0..len {
                            ga[idx(d)] += g[idx(d)] - y.data()[idx(d)].exp() * s;
                        }
                    }
                }
            }
        }
        &Op::Conv { x, w, geom } => {
            let (xv, wv) = (val(x).clone(), val(w).clone());
            let mut gx = acc(grads, nodes, x).map(std::mem::take);
            let mut gw = acc(grads, nodes, w).map(std::mem::take);
            kernels::conv_backward(xv.data(), wv.data(), g, geom, gx.as_deref_mut(), gw.as_deref_mut());
            if let Some(v) = gx {
                grads[x] = Some(v);
            }
            if let Some(v) = gw {
                grads[w] = Some(v);
            }
        }
        &Op::ConvTranspose { x, w, geom } => {
            let (xv, wv) = (val(x).clone(), val(w).clone());
            let mut gx = acc(grads, nodes, x).map(std::mem::take);
            let mut gw = acc(grads, nodes, w).map(std::mem::take);
            kernels::conv_transpose_backward(xv.data(), wv.data(), g, geom, gx.as_deref_mut(), gw.as_deref_mut());
            if let Some(v) = gx {
                grads[x] = Some(v);
            }
            if let Some(v) = gw {
                grads[w] = Some(v);
            }
        }
        Op::PoolMean { x, spans } => {
            let d = node.value.cols();
            if let Some(gx) = acc(grads, nodes, *x) {
                for (i, &(s, e)) in spans.iter().enumerate() {
                    let inv = 1.0 / (e - s) as f64;
                    for t in s..e {
                        for c in 0..d {
                            gx[t * d + c] += g[i * d + c] * inv;
                        }
                    }
                }
            }
        }
        &Op::Transpose(a) => {
            let (r, c) = (node.value.shape()[0], node.value.shape()[1]);
            if let Some(ga) = acc(grads, nodes, a) {
                for i in 0..r {
                    for j in 0..c {
                        ga[j * r + i] += g[i * c + j];
                    }
                }
            }
        }
        Op::Concat(ids) => {
            let rows = node.value.rows();
            let total = node.value.cols();
            let mut off = 0;
            for &id in ids {
                let c = val(id).cols();
                if let Some(gi) = acc(grads, nodes, id) {
                    for r in 0..rows {
                        for j in 0..c {
                            gi[r * c + j] += g[r * total + off + j];
                        }
                    }
                }
                off += c;
            }
        }
        &Op::Sum(a) => {
            if let Some(ga) = acc(grads, nodes, a) {
                ga.iter_mut().for_each(|x| *x += g[0]);
            }
        }
        &Op::Mean(a) => {
            let n = val(a).len() as f64;
            if let Some(ga) = acc(grads, nodes, a) {
                ga.iter_mut().for_each(|x| *x += g[0] / n);
            }
        }
        Op::GatherRows { x, index } => {
            let d = node.value.cols();
            if let Some(gx) = acc(grads, nodes, *x) {
                for (i, &src) in index.iter().enumerate() {
                    for c in 0..d {
                        gx[src * d + c] += g[i * d + c];
                    }
                }
            }
        }
        &Op::Reshape(a) => {
            if let Some(ga) = acc(grads, nodes, a) {
                for (x, &gv) in ga.iter_mut().zip(g) {
                    *x += gv;
                }
            }
        }
        Op::ScalarFn { x, grad } => {
            if let Some(gx) = acc(grads, nodes, *x) {
                for (a, &d) in gx.iter_mut().zip(grad.data()) {
                    *a += g[0] * d;
                }
            }
        }
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Array {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    /// Value of a single-element variable.
    pub fn item(&self) -> f64 {
        self.value().item().expect("item() on a non-scalar")
    }

    pub fn is_tracked(&self) -> bool {
        self.tape.nodes.borrow()[self.id].tracked
    }

    fn same_tape(&self, other: &Var<'t>) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "variables recorded on different tapes"
        );
    }

    /// Copy of this value with gradient flow cut.
    pub fn detach(&self) -> Var<'t> {
        self.tape.constant(self.value())
    }

    pub fn matmul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other);
        let (a, b) = (self.value(), other.value());
        if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
            return Err(Error::shape("matmul", format!("{:?} × {:?}", a.shape(), b.shape())));
        }
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let mut out = vec![0.0; m * n];
        kernels::matmul_acc(a.data(), b.data(), &mut out, m, k, n);
        self.tape.record(
            "matmul",
            Array::new(&[m, n], out)?,
            &[self.id, other.id],
            Op::MatMul(self.id, other.id),
        )
    }

    fn binary(&self, other: Var<'t>, name: &'static str, f: fn(f64, f64) -> f64, op: Op) -> Result<Var<'t>> {
        self.same_tape(&other);
        let (a, b) = (self.value(), other.value());
        let value = if a.shape() == b.shape() {
            let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
            Array::new(a.shape(), data)?
        } else {
            let shape = kernels::broadcast_shape(a.shape(), b.shape())
                .map_err(|_| Error::shape(name, format!("{:?} vs {:?}", a.shape(), b.shape())))?;
            let oa = kernels::broadcast_offsets(&shape, a.shape());
            let ob = kernels::broadcast_offsets(&shape, b.shape());
            let data = oa.iter().zip(&ob).map(|(&i, &j)| f(a.data()[i], b.data()[j])).collect();
            Array::new(&shape, data)?
        };
        self.tape.record(name, value, &[self.id, other.id], op)
    }

    /// Broadcasting addition.
    pub fn add(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "add", |x, y| x + y, Op::Add(self.id, other.id))
    }

    pub fn sub(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "sub", |x, y| x - y, Op::Sub(self.id, other.id))
    }

    /// Broadcasting elementwise product.
    pub fn mul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "mul", |x, y| x * y, Op::Mul(self.id, other.id))
    }

    pub fn scale(&self, c: f64) -> Result<Var<'t>> {
        let v = self.value().map(|x| c * x);
        self.tape.record("scale", v, &[self.id], Op::Scale(self.id, c))
    }

    pub fn unary(&self, kind: Unary) -> Result<Var<'t>> {
        let x = self.value();
        let (name, v) = match kind {
            Unary::Relu => ("relu", x.map(|v| v.max(0.0))),
            Unary::Gelu => ("gelu", x.map(kernels::gelu)),
            Unary::Exp => ("exp", x.map(f64::exp)),
            Unary::Log => {
                if let Some(bad) = x.data().iter().find(|&&v| v <= 0.0) {
                    return Err(Error::Domain {
                        op: "log",
                        detail: format!("nonpositive argument {bad}"),
                    });
                }
                ("log", x.map(f64::ln))
            }
        };
        self.tape.record(name, v, &[self.id], Op::Unary(self.id, kind))
    }

    pub fn relu(&self) -> Result<Var<'t>> {
        self.unary(Unary::Relu)
    }

    pub fn gelu(&self) -> Result<Var<'t>> {
        self.unary(Unary::Gelu)
    }

    pub fn log(&self) -> Result<Var<'t>> {
        self.unary(Unary::Log)
    }

    pub fn exp(&self) -> Result<Var<'t>> {
        self.unary(Unary::Exp)
    }

    fn check_axis(&self, name: &'static str, axis: usize) -> Result<Array> {
        let x = self.value();
        if axis >= x.rank() || x.shape()[axis] == 0 {
            return Err(Error::shape(name, format!("axis {axis} of {:?}", x.shape())));
        }
        Ok(x)
    }

    /// Softmax along `axis`, computed with max subtraction.
    pub fn softmax(&self, axis: usize) -> Result<Var<'t>> {
        let x = self.check_axis("softmax", axis)?;
        let v = softmax_along(&x, axis, false);
        self.tape.record("softmax", v, &[self.id], Op::Softmax(self.id, axis))
    }

    pub fn log_softmax(&self, axis: usize) -> Result<Var<'t>> {
        let x = self.check_axis("log_softmax", axis)?;
        let v = softmax_along(&x, axis, true);
        self.tape
            .record("log_softmax", v, &[self.id], Op::LogSoftmax(self.id, axis))
    }

    /// 1-D convolution along time. `self` is `[T × Cin]`, `w` is
    /// `[k × Cin × Cout]`.
    pub fn temporal_conv(&self, w: Var<'t>, stride: usize, padding: Padding) -> Result<Var<'t>> {
        self.same_tape(&w);
        let (x, wv) = (self.value(), w.value());
        let geom = conv_geom(&x, &wv, stride, padding)?;
        let y = kernels::conv_forward(x.data(), wv.data(), geom);
        self.tape.record(
            "temporal_conv",
            Array::new(&[geom.t_out, geom.c_out], y)?,
            &[self.id, w.id],
            Op::Conv {
                x: self.id,
                w: w.id,
                geom,
            },
        )
    }

    /// Transposed temporal convolution, upsampling time by `stride`.
    /// `self` is `[T × Cin]`, `w` is `[k × Cout × Cin]`; output is
    /// `[T·stride × Cout]`. With the same `w` this is the adjoint of
    /// `temporal_conv(·, w, stride, Same)` on a `T·stride`-long input.
    pub fn conv_transpose(&self, w: Var<'t>, stride: usize) -> Result<Var<'t>> {
        self.same_tape(&w);
        let (x, wv) = (self.value(), w.value());
        if x.rank() != 2 || x.rows() == 0 {
            return Err(Error::Empty { op: "conv_transpose" });
        }
        if stride == 0 {
            return Err(Error::shape("conv_transpose", "stride must be ≥ 1"));
        }
        if wv.rank() != 3 || wv.shape()[2] != x.shape()[1] || wv.shape()[0] % 2 == 0 {
            return Err(Error::shape(
                "conv_transpose",
                format!("x {:?}, w {:?}", x.shape(), wv.shape()),
            ));
        }
        let k = wv.shape()[0];
        let geom = ConvGeom {
            t_in: x.rows() * stride,
            t_out: x.rows(),
            k,
            c_in: wv.shape()[1],
            c_out: wv.shape()[2],
            stride,
            pad: (k - 1) / 2,
        };
        let y = kernels::conv_transpose_forward(x.data(), wv.data(), geom);
        self.tape.record(
            "conv_transpose",
            Array::new(&[geom.t_in, geom.c_in], y)?,
            &[self.id, w.id],
            Op::ConvTranspose {
                x: self.id,
                w: w.id,
                geom,
            },
        )
    }

    /// Row `i` of the output is the mean of `self` over `spans[i]`.
    pub fn pool_mean(&self, spans: &[Span]) -> Result<Var<'t>> {
        let x = self.value();
        if x.rank() != 2 {
            return Err(Error::shape("pool", format!("rank {}", x.rank())));
        }
        validate_spans(spans, x.rows())?;
        let d = x.cols();
        let mut out = vec![0.0; spans.len() * d];
        for (i, &(s, e)) in spans.iter().enumerate() {
            let inv = 1.0 / (e - s) as f64;
            let orow = &mut out[i * d..(i + 1) * d];
            for t in s..e {
                for (o, &v) in orow.iter_mut().zip(x.row(t)) {
                    *o += v;
                }
            }
            orow.iter_mut().for_each(|o| *o *= inv);
        }
        self.tape.record(
            "pool",
            Array::new(&[spans.len(), d], out)?,
            &[self.id],
            Op::PoolMean {
                x: self.id,
                spans: spans.to_vec(),
            },
        )
    }

    pub fn transpose(&self) -> Result<Var<'t>> {
        let v = self.value().transpose2()?;
        self.tape.record("transpose", v, &[self.id], Op::Transpose(self.id))
    }

    pub fn sum(&self) -> Result<Var<'t>> {
        let v = Array::scalar(self.value().sum());
        self.tape.record("sum", v, &[self.id], Op::Sum(self.id))
    }

    pub fn mean(&self) -> Result<Var<'t>> {
        let x = self.value();
        if x.is_empty() {
            return Err(Error::Empty { op: "mean" });
        }
        let v = Array::scalar(x.sum() / x.len() as f64);
        self.tape.record("mean", v, &[self.id], Op::Mean(self.id))
    }

    /// Selects rows of a 2-D value (repeats allowed).
    pub fn gather_rows(&self, index: &[usize]) -> Result<Var<'t>> {
        let x = self.value();
        if x.rank() != 2 {
            return Err(Error::shape("gather_rows", format!("rank {}", x.rank())));
        }
        let d = x.cols();
        let mut out = Vec::with_capacity(index.len() * d);
        for &i in index {
            if i >= x.rows() {
                return Err(Error::shape("gather_rows", format!("row {i} of {}", x.rows())));
            }
            out.extend_from_slice(x.row(i));
        }
        self.tape.record(
            "gather_rows",
            Array::new(&[index.len(), d], out)?,
            &[self.id],
            Op::GatherRows {
                x: self.id,
                index: index.to_vec(),
            },
        )
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'t>> {
        let v = self.value().reshape(shape)?;
        self.tape.record("reshape", v, &[self.id], Op::Reshape(self.id))
    }

    /// Convenience: `self · w + b` for a `[T × D]` input.
    pub fn affine(&self, w: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
        self.matmul(w)?.add(b)
    }
}

fn conv_geom(x: &Array, w: &Array, stride: usize, padding: Padding) -> Result<ConvGeom> {
    if x.rank() != 2 || x.rows() == 0 {
        return Err(Error::Empty { op: "temporal_conv" });
    }
    if stride == 0 {
        return Err(Error::shape("temporal_conv", "stride must be ≥ 1"));
    }
    if w.rank() != 3 || w.shape()[1] != x.shape()[1] {
        return Err(Error::shape(
            "temporal_conv",
            format!("x {:?}, w {:?}", x.shape(), w.shape()),
        ));
    }
    let k = w.shape()[0];
    if k.is_multiple_of(2) {
        return Err(Error::shape("temporal_conv", format!("kernel size {k} must be odd")));
    }
    let t = x.rows();
    let (pad, t_out) = match padding {
        Padding::Same => ((k - 1) / 2, t.div_ceil(stride)),
        Padding::Valid => {
            if t < k {
                return Err(Error::shape("temporal_conv", format!("T={t} < k={k}")));
            }
            (0, (t - k) / stride + 1)
        }
    };
    Ok(ConvGeom {
        t_in: t,
        t_out,
        k,
        c_in: w.shape()[1],
        c_out: w.shape()[2],
        stride,
        pad,
    })
}

pub(crate) fn validate_spans(spans: &[Span], len: usize) -> Result<()> {
    if spans.is_empty() {
        return Err(Error::InvalidSpans("no spans".into()));
    }
    let mut prev_end = 0;
    for (i, &(s, e)) in spans.iter().enumerate() {
        if e <= s {
            return Err(Error::InvalidSpans(format!("span {i} [{s},{e}) is empty")));
        }
        if s < prev_end {
            return Err(Error::InvalidSpans(format!("span {i} overlaps its predecessor")));
        }
        if e > len {
            return Err(Error::InvalidSpans(format!("span {i} ends past {len}")));
        }
        prev_end = e;
    }
    Ok(())
}

/// Plain (untaped) softmax / log-softmax along an axis.
pub fn softmax_along(x: &Array, axis: usize, log: bool) -> Array {
    let (outer, len, inner) = kernels::axis_split(x.shape(), axis);
    let mut out = vec![0.0; x.len()];
    let d = x.data();
    for o in 0..outer {
        for i in 0..inner {
            let idx = |k: usize| (o * len + k) * inner + i;
            let m = (0..len).map(|k| d[idx(k)]).fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = (0..len).map(|k| (d[idx(k)] - m).exp()).sum();
            let lz = z.ln();
            for k in 0..len {
                out[idx(k)] = if log {
                    d[idx(k)] - m - lz
                } else {
                    (d[idx(k)] - m).exp() / z
                };
            }
        }
    }
    Array::new(x.shape(), out).expect("same shape")
}
