use std::borrow::Cow;

use super::kernels::{self, axis_split, ConvGeometry};
use super::{numel, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug)]
enum Unary {
    Relu,
    Tanh,
    Sigmoid,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Conv2d {
        input: Var,
        kernels: Var,
        geom: ConvGeometry,
        c_out: usize,
    },
    AddBias {
        x: Var,
        bias: Var,
        axis: usize,
    },
    MaxPoolTemporal {
        x: Var,
        argmax: Vec<usize>,
    },
    Unary(Var, Unary),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Softmax {
        x: Var,
        axis: usize,
    },
    Reshape(Var),
    Permute {
        x: Var,
        axes: Vec<usize>,
    },
    Slice {
        x: Var,
        axis: usize,
        start: usize,
    },
    Concat {
        xs: Vec<Var>,
        axis: usize,
    },
    Select {
        x: Var,
        indices: Vec<usize>,
    },
    Ln {
        x: Var,
        floor: f64,
    },
    Sum(Var),
    L2Normalize {
        x: Var,
        norm: f64,
    },
}

struct Node<'a> {
    shape: Vec<usize>,
    value: Cow<'a, [f64]>,
    op: Op,
    requires_grad: bool,
}

/// Records operations in execution order; node indices are a topological order.
#[derive(Default)]
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
}

/// Gradients of a scalar loss with respect to every leaf that requires them.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds the gradient of `v` (if any) into `tensor`'s gradient buffer.
    pub fn accumulate(&self, v: Var, tensor: &mut Tensor) -> Result<()> {
        match self.wrt(v) {
            Some(g) => tensor.accumulate_grad(g),
            None => Ok(()),
        }
    }
}

fn same_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(Error::dim(op, format!("{a:?} vs {b:?}")));
    }
    Ok(())
}

fn add_into(dst: &mut Option<Vec<f64>>, src: &[f64]) {
    match dst {
        Some(d) => d.iter_mut().zip(src).for_each(|(a, b)| *a += b),
        None => *dst = Some(src.to_vec()),
    }
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(numel(&shape), value.len());
        self.nodes.push(Node {
            shape,
            value: Cow::Owned(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Copies a node out as a detached tensor.
    pub fn tensor(&self, v: Var) -> Tensor {
        Tensor::new(self.shape(v).to_vec(), self.value(v).to_vec()).expect("node shape is consistent")
    }

    /// Registers a caller-owned tensor without copying its storage.
    pub fn leaf(&mut self, t: &'a Tensor) -> Var {
        self.nodes.push(Node {
            shape: t.shape().to_vec(),
            value: Cow::Borrowed(t.data()),
            op: Op::Leaf,
            requires_grad: t.requires_grad(),
        });
        Var(self.nodes.len() - 1)
    }

    /// Registers a leaf that never receives gradient.
    pub fn constant(&mut self, shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Var> {
        let shape = shape.into();
        if numel(&shape) != data.len() {
            return Err(Error::dim("constant", format!("shape {shape:?} with {} values", data.len())));
        }
        Ok(self.push(shape, data, Op::Leaf, false))
    }

    /// Registers an owned leaf that does receive gradient (useful for checks).
    pub fn variable(&mut self, shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Var> {
        let v = self.constant(shape, data)?;
        self.nodes[v.0].requires_grad = true;
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim("matmul", format!("{sa:?} × {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        kernels::gemm(m, k, n, self.value(a), false, self.value(b), false, 0.0, &mut out);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 {
            return Err(Error::dim("transpose", format!("expected a matrix, got {s:?}")));
        }
        let (out, shape) = kernels::permute(self.value(x), &s, &[1, 0]);
        let rg = self.rg(x);
        Ok(self.push(shape, out, Op::Transpose(x), rg))
    }

    /// Zero-padded cross-correlation of a `C_in × H × W` input with
    /// `C_out × C_in × kh × kw` kernels.
    pub fn conv2d(&mut self, input: Var, kernels: Var, stride: usize, padding: usize) -> Result<Var> {
        let (si, sk) = (self.shape(input).to_vec(), self.shape(kernels).to_vec());
        if si.len() != 3 || sk.len() != 4 || si[0] != sk[1] {
            return Err(Error::dim("conv2d", format!("input {si:?}, kernels {sk:?}")));
        }
        if stride == 0 {
            return Err(Error::dim("conv2d", "stride must be positive"));
        }
        let (c_in, h, w) = (si[0], si[1], si[2]);
        let (c_out, kh, kw) = (sk[0], sk[2], sk[3]);
        if kh > h + 2 * padding || kw > w + 2 * padding {
            return Err(Error::dim(
                "conv2d",
                format!("kernel {kh}×{kw} exceeds padded input {}×{}", h + 2 * padding, w + 2 * padding),
            ));
        }
        let geom = ConvGeometry {
            c_in,
            h,
            w,
            kh,
            kw,
            stride,
            padding,
            oh: (h + 2 * padding - kh) / stride + 1,
            ow: (w + 2 * padding - kw) / stride + 1,
        };
        let cols = kernels::im2col(self.value(input), &geom);
        let mut out = vec![0.0; c_out * geom.cols()];
        kernels::gemm(c_out, geom.rows(), geom.cols(), self.value(kernels), false, &cols, false, 0.0, &mut out);
        let rg = self.rg(input) || self.rg(kernels);
        Ok(self.push(
            vec![c_out, geom.oh, geom.ow],
            out,
            Op::Conv2d {
                input,
                kernels,
                geom,
                c_out,
            },
            rg,
        ))
    }

    /// Adds `bias[i]` to every element whose index along `axis` is `i`.
    pub fn add_bias(&mut self, x: Var, bias: Var, axis: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() || self.value(bias).len() != s[axis] {
            return Err(Error::dim(
                "add_bias",
                format!("input {s:?}, bias {:?}, axis {axis}", self.shape(bias)),
            ));
        }
        let (outer, len, inner) = axis_split(&s, axis);
        let b = self.value(bias);
        let mut out = self.value(x).to_vec();
        for o in 0..outer {
            for i in 0..len {
                let base = (o * len + i) * inner;
                out[base..base + inner].iter_mut().for_each(|v| *v += b[i]);
            }
        }
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(s, out, Op::AddBias { x, bias, axis }, rg))
    }

    /// Max over non-overlapping windows of `pool` steps along axis 1 of a
    /// `C × H × W` input; a trailing partial window is dropped.
    pub fn maxpool_temporal(&mut self, x: Var, pool: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 {
            return Err(Error::dim("maxpool_temporal", format!("expected C×H×W, got {s:?}")));
        }
        if pool == 0 || pool > s[1] {
            return Err(Error::dim("maxpool_temporal", format!("pool {pool} for temporal extent {}", s[1])));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        let oh = h / pool;
        let v = self.value(x);
        let mut out = Vec::with_capacity(c * oh * w);
        let mut argmax = Vec::with_capacity(c * oh * w);
        for ci in 0..c {
            for oy in 0..oh {
                for xi in 0..w {
                    let mut best = (ci * h + oy * pool) * w + xi;
                    for p in 1..pool {
                        let idx = (ci * h + oy * pool + p) * w + xi;
                        if v[idx] > v[best] {
                            best = idx;
                        }
                    }
                    out.push(v[best]);
                    argmax.push(best);
                }
            }
        }
        let rg = self.rg(x);
        Ok(self.push(vec![c, oh, w], out, Op::MaxPoolTemporal { x, argmax }, rg))
    }

    fn unary(&mut self, x: Var, kind: Unary) -> Var {
        let f: fn(f64) -> f64 = match kind {
            Unary::Relu => |v| v.max(0.0),
            Unary::Tanh => f64::tanh,
            Unary::Sigmoid => |v| {
                if v >= 0.0 {
                    1.0 / (1.0 + (-v).exp())
                } else {
                    let e = v.exp();
                    e / (1.0 + e)
                }
            },
        };
        let out = self.value(x).iter().map(|&v| f(v)).collect();
        let (shape, rg) = (self.shape(x).to_vec(), self.rg(x));
        self.push(shape, out, Op::Unary(x, kind), rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Relu)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Tanh)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Sigmoid)
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, f: fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        same_shape(name, self.shape(a), self.shape(b))?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| f(x, y)).collect();
        let (shape, rg) = (self.shape(a).to_vec(), self.rg(a) || self.rg(b));
        Ok(self.push(shape, out, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x).iter().map(|v| v * c).collect();
        let (shape, rg) = (self.shape(x).to_vec(), self.rg(x));
        self.push(shape, out, Op::Scale(x, c), rg)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x).iter().map(|v| v + c).collect();
        let (shape, rg) = (self.shape(x).to_vec(), self.rg(x));
        self.push(shape, out, Op::AddScalar(x), rg)
    }

    /// Max-shifted softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() {
            return Err(Error::dim("softmax", format!("axis {axis} for shape {s:?}")));
        }
        let (outer, len, inner) = axis_split(&s, axis);
        let v = self.value(x);
        let mut out = vec![0.0; v.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| (o * len + k) * inner + i;
                let max = (0..len).map(|k| v[at(k)]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for k in 0..len {
                    let e = (v[at(k)] - max).exp();
                    out[at(k)] = e;
                    total += e;
                }
                for k in 0..len {
                    out[at(k)] /= total;
                }
            }
        }
        let rg = self.rg(x);
        Ok(self.push(s, out, Op::Softmax { x, axis }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let shape = shape.into();
        if numel(&shape) != self.value(x).len() {
            return Err(Error::dim("reshape", format!("{:?} to {shape:?}", self.shape(x))));
        }
        let (out, rg) = (self.value(x).to_vec(), self.rg(x));
        Ok(self.push(shape, out, Op::Reshape(x), rg))
    }

    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let mut seen = vec![false; s.len()];
        if axes.len() != s.len() || axes.iter().any(|&a| a >= s.len() || std::mem::replace(&mut seen[a], true)) {
            return Err(Error::dim("permute", format!("axes {axes:?} for shape {s:?}")));
        }
        let (out, shape) = kernels::permute(self.value(x), &s, axes);
        let rg = self.rg(x);
        Ok(self.push(
            shape,
            out,
            Op::Permute {
                x,
                axes: axes.to_vec(),
            },
            rg,
        ))
    }

    /// Elements `start..start + len` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() || start + len > s[axis] {
            return Err(Error::dim("slice", format!("{start}..{} on axis {axis} of {s:?}", start + len)));
        }
        let (outer, full, inner) = axis_split(&s, axis);
        let v = self.value(x);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            out.extend_from_slice(&v[base..base + len * inner]);
        }
        let mut shape = s;
        shape[axis] = len;
        let rg = self.rg(x);
        Ok(self.push(shape, out, Op::Slice { x, axis, start }, rg))
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let Some(&first) = xs.first() else {
            return Err(Error::dim("concat", "no inputs"));
        };
        let s0 = self.shape(first).to_vec();
        if axis >= s0.len() {
            return Err(Error::dim("concat", format!("axis {axis} for shape {s0:?}")));
        }
        let mut total = 0;
        for &x in xs {
            let s = self.shape(x);
            let compatible = s.len() == s0.len() && s.iter().zip(&s0).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::dim("concat", format!("{s:?} vs {s0:?} on axis {axis}")));
            }
            total += s[axis];
        }
        let (outer, _, inner) = axis_split(&s0, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &x in xs {
                let len = self.shape(x)[axis];
                out.extend_from_slice(&self.value(x)[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let mut shape = s0;
        shape[axis] = total;
        let rg = xs.iter().any(|&x| self.rg(x));
        Ok(self.push(
            shape,
            out,
            Op::Concat {
                xs: xs.to_vec(),
                axis,
            },
            rg,
        ))
    }

    /// Gathers flat elements `indices` into a 1-D result.
    pub fn select(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        let v = self.value(x);
        if let Some(&bad) = indices.iter().find(|&&i| i >= v.len()) {
            return Err(Error::dim("select", format!("index {bad} out of {} elements", v.len())));
        }
        let out = indices.iter().map(|&i| v[i]).collect();
        let rg = self.rg(x);
        Ok(self.push(
            vec![indices.len()],
            out,
            Op::Select {
                x,
                indices: indices.to_vec(),
            },
            rg,
        ))
    }

    /// `ln(max(x, floor))`; clamped elements pass no gradient.
    pub fn ln(&mut self, x: Var, floor: f64) -> Var {
        let out = self.value(x).iter().map(|v| v.max(floor).ln()).collect();
        let (shape, rg) = (self.shape(x).to_vec(), self.rg(x));
        self.push(shape, out, Op::Ln { x, floor }, rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).iter().sum();
        let rg = self.rg(x);
        self.push(vec![1], vec![total], Op::Sum(x), rg)
    }

    /// Divides by the Euclidean norm of all elements.
    pub fn l2_normalize(&mut self, x: Var) -> Result<Var> {
        let norm = self.value(x).iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::Input("cannot normalize a zero-norm vector".into()));
        }
        let out = self.value(x).iter().map(|v| v / norm).collect();
        let (shape, rg) = (self.shape(x).to_vec(), self.rg(x));
        Ok(self.push(shape, out, Op::L2Normalize { x, norm }, rg))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads)?;
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let node = &self.nodes[i];
        let y = &node.value;
        macro_rules! send {
            ($v:expr, $grad:expr) => {{
                let v: Var = $v;
                if self.rg(v) {
                    let d: Vec<f64> = $grad;
                    add_into(&mut grads[v.0], &d);
                }
            }};
        }
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                send!(*a, {
                    let mut d = vec![0.0; m * k];
                    kernels::gemm(m, n, k, g, false, self.value(*b), true, 0.0, &mut d);
                    d
                });
                send!(*b, {
                    let mut d = vec![0.0; k * n];
                    kernels::gemm(k, m, n, self.value(*a), true, g, false, 0.0, &mut d);
                    d
                });
            }
            Op::Transpose(x) => {
                send!(*x, kernels::permute(g, &node.shape, &[1, 0]).0);
            }
            Op::Conv2d {
                input,
                kernels: k,
                geom,
                c_out,
            } => {
                if self.rg(*k) {
                    let cols = kernels::im2col(self.value(*input), geom);
                    let mut d = vec![0.0; c_out * geom.rows()];
                    kernels::gemm(*c_out, geom.cols(), geom.rows(), g, false, &cols, true, 0.0, &mut d);
                    add_into(&mut grads[k.0], &d);
                }
                send!(*input, {
                    let mut dcols = vec![0.0; geom.rows() * geom.cols()];
                    kernels::gemm(geom.rows(), *c_out, geom.cols(), self.value(*k), true, g, false, 0.0, &mut dcols);
                    let mut d = vec![0.0; geom.c_in * geom.h * geom.w];
                    kernels::col2im(&dcols, geom, &mut d);
                    d
                });
            }
            Op::AddBias { x, bias, axis } => {
                send!(*x, g.to_vec());
                send!(*bias, {
                    let (outer, len, inner) = axis_split(&node.shape, *axis);
                    let mut d = vec![0.0; len];
                    for o in 0..outer {
                        for (c, dc) in d.iter_mut().enumerate() {
                            let base = (o * len + c) * inner;
                            *dc += g[base..base + inner].iter().sum::<f64>();
                        }
                    }
                    d
                });
            }
            Op::MaxPoolTemporal { x, argmax } => {
                send!(*x, {
                    let mut d = vec![0.0; self.value(*x).len()];
                    for (gi, &src) in g.iter().zip(argmax) {
                        d[src] += gi;
                    }
                    d
                });
            }
            Op::Unary(x, kind) => {
                let xv = self.value(*x);
                send!(*x, match kind {
                    Unary::Relu => g.iter().zip(xv).map(|(gi, &v)| if v > 0.0 { *gi } else { 0.0 }).collect(),
                    Unary::Tanh => g.iter().zip(y.iter()).map(|(gi, t)| gi * (1.0 - t * t)).collect(),
                    Unary::Sigmoid => g.iter().zip(y.iter()).map(|(gi, s)| gi * s * (1.0 - s)).collect(),
                });
            }
            Op::Add(a, b) => {
                send!(*a, g.to_vec());
                send!(*b, g.to_vec());
            }
            Op::Sub(a, b) => {
                send!(*a, g.to_vec());
                send!(*b, g.iter().map(|v| -v).collect());
            }
            Op::Mul(a, b) => {
                send!(*a, g.iter().zip(self.value(*b)).map(|(gi, v)| gi * v).collect());
                send!(*b, g.iter().zip(self.value(*a)).map(|(gi, v)| gi * v).collect());
            }
            Op::Scale(x, c) => send!(*x, g.iter().map(|v| v * c).collect()),
            Op::AddScalar(x) | Op::Reshape(x) => send!(*x, g.to_vec()),
            Op::Softmax { x, axis } => {
                send!(*x, {
                    let (outer, len, inner) = axis_split(&node.shape, *axis);
                    let mut d = vec![0.0; g.len()];
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |k: usize| (o * len + k) * inner + i;
                            let dot: f64 = (0..len).map(|k| g[at(k)] * y[at(k)]).sum();
                            for k in 0..len {
                                d[at(k)] = y[at(k)] * (g[at(k)] - dot);
                            }
                        }
                    }
                    d
                });
            }
            Op::Permute { x, axes } => {
                let mut inverse = vec![0; axes.len()];
                for (i, &a) in axes.iter().enumerate() {
                    inverse[a] = i;
                }
                send!(*x, kernels::permute(g, &node.shape, &inverse).0);
            }
            Op::Slice { x, axis, start } => {
                send!(*x, {
                    let src_shape = self.shape(*x);
                    let (outer, full, inner) = axis_split(src_shape, *axis);
                    let len = node.shape[*axis];
                    let mut d = vec![0.0; self.value(*x).len()];
                    for o in 0..outer {
                        let base = (o * full + start) * inner;
                        d[base..base + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
                    }
                    d
                });
            }
            Op::Concat { xs, axis } => {
                let (outer, total, inner) = axis_split(&node.shape, *axis);
                let mut offset = 0;
                for &x in xs {
                    let len = self.shape(x)[*axis];
                    send!(x, {
                        let mut d = Vec::with_capacity(outer * len * inner);
                        for o in 0..outer {
                            let base = (o * total + offset) * inner;
                            d.extend_from_slice(&g[base..base + len * inner]);
                        }
                        d
                    });
                    offset += len;
                }
            }
            Op::Select { x, indices } => {
                send!(*x, {
                    let mut d = vec![0.0; self.value(*x).len()];
                    for (gi, &src) in g.iter().zip(indices) {
                        d[src] += gi;
                    }
                    d
                });
            }
            Op::Ln { x, floor } => {
                send!(*x, g
                    .iter()
                    .zip(self.value(*x))
                    .map(|(gi, &v)| if v > *floor { gi / v } else { 0.0 })
                    .collect());
            }
            Op::Sum(x) => send!(*x, vec![g[0]; self.value(*x).len()]),
            Op::L2Normalize { x, norm } => {
                send!(*x, {
                    let dot: f64 = g.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
                    g.iter().zip(y.iter()).map(|(gi, yi)| (gi - yi * dot) / norm).collect()
                });
            }
        }
        Ok(())
    }
}
