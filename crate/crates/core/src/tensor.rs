//! Dense 1-D/2-D arrays and a dynamic reverse-mode tape.
//!
//! A [`Tensor`] is a plain value (shape + row-major `f64` buffer + optional
//! gradient). Computation happens on a [`Tape`]: every forward pass records
//! nodes in append order and [`Tape::backward`] replays them in reverse.
//! One-dimensional tensors of length `n` behave as `1 × n` row vectors in
//! every matrix operation.

use std::fmt;

use crate::error::{contract, Error, Result};

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("values", &self.values)
            .field("requires_grad", &self.requires_grad)
            .finish()
    }
}

impl Tensor {
    pub fn new(shape: &[usize], values: Vec<f64>) -> Result<Self> {
        check_shape(shape)?;
        let numel: usize = shape.iter().product();
        if numel != values.len() {
            return Err(Error::Dimension {
                op: "tensor",
                lhs: shape.to_vec(),
                rhs: vec![values.len()],
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            values,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Self::new(shape, vec![0.0; numel]).expect("zeros: invalid shape")
    }

    pub fn scalar(value: f64) -> Self {
        Self::new(&[], vec![value]).expect("scalar")
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(contract("from_rows: ragged rows"));
        }
        let values = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(&[rows.len(), cols], values)
    }

    pub fn with_requires_grad(mut self, flag: bool) -> Self {
        self.set_requires_grad(flag);
        self
    }

    pub fn set_requires_grad(&mut self, flag: bool) {
        self.requires_grad = flag;
        if !flag {
            self.grad = None;
        }
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    /// Adds `g` into the gradient buffer. Ignored when the tensor is frozen.
    pub fn accumulate_grad(&mut self, g: &[f64]) -> Result<()> {
        if !self.requires_grad {
            return Ok(());
        }
        if g.len() != self.values.len() {
            return Err(Error::Dimension {
                op: "accumulate_grad",
                lhs: self.shape.clone(),
                rhs: vec![g.len()],
            });
        }
        match &mut self.grad {
            Some(buf) => buf.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => self.grad = Some(g.to_vec()),
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// `(rows, cols)` view; 0-D and 1-D tensors are single rows.
    pub fn dims(&self) -> (usize, usize) {
        matrix_dims(&self.shape)
    }
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.len() > 2 {
        return Err(contract(format!(
            "tensors are at most 2-D, got shape {shape:?}"
        )));
    }
    Ok(())
}

fn matrix_dims(shape: &[usize]) -> (usize, usize) {
    match shape {
        [] => (1, 1),
        [n] => (1, *n),
        [r, c] => (*r, *c),
        _ => unreachable!("shape checked at construction"),
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Tanh,
    Sigmoid,
    Exp,
    Log,
    Softplus,
    Silu,
    Gelu,
    Mish,
}

impl Unary {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Tanh => x.tanh(),
            Unary::Sigmoid => sigmoid(x),
            Unary::Exp => x.exp(),
            Unary::Log => x.ln(),
            Unary::Softplus => softplus(x),
            Unary::Silu => x * sigmoid(x),
            Unary::Gelu => x * normal_cdf(x),
            Unary::Mish => x * softplus(x).tanh(),
        }
    }

    /// d/dx given the input `x` and the forward output `y`.
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Tanh => 1.0 - y * y,
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Exp => y,
            Unary::Log => 1.0 / x,
            Unary::Softplus => sigmoid(x),
            Unary::Silu => {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            }
            Unary::Gelu => normal_cdf(x) + x * normal_pdf(x),
            Unary::Mish => {
                let t = softplus(x).tanh();
                t + x * (1.0 - t * t) * sigmoid(x)
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Backward rule for a fused operation recorded with [`Tape::custom`].
///
/// Receives the gradient of the node output and one flag per input telling
/// whether that input needs a gradient; returns one entry per input.
pub trait CustomBackward {
    fn backward(&self, out_grad: &[f64], needs: &[bool]) -> Vec<Option<Vec<f64>>>;
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Linear(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Unary(Var, Unary),
    Clamp(Var, f64, f64),
    Concat(Vec<Var>, usize),
    SliceCols(Var, usize),
    Sum(Var),
    Mean(Var),
    Mse(Var, Var),
    Softmax(Var),
    Custom(Vec<Var>, Box<dyn CustomBackward>),
}

struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

/// Append-only record of one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, needs_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    pub fn dims(&self, v: Var) -> (usize, usize) {
        matrix_dims(&self.node(v).shape)
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        let n = self.node(v);
        Tensor::new(&n.shape, n.value.clone()).expect("node shape is valid")
    }

    /// Leaf copied from `t`; tracked iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.shape.clone(), t.values.clone(), Op::Leaf, t.requires_grad)
    }

    pub fn constant(&mut self, shape: &[usize], values: Vec<f64>) -> Result<Var> {
        let t = Tensor::new(shape, values)?;
        Ok(self.push(t.shape, t.values, Op::Leaf, false))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(self.dim_err("matmul", a, b));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a), false, self.value(b), false, &mut out, 0.0);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b), needs))
    }

    /// `x · wᵀ` for `x: [m × k]`, `w: [n × k]` (weights stored out × in).
    pub fn linear(&mut self, x: Var, w: Var) -> Result<Var> {
        let (m, k) = self.dims(x);
        let (n, k2) = self.dims(w);
        if k != k2 {
            return Err(self.dim_err("linear", x, w));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(x), false, self.value(w), true, &mut out, 0.0);
        let needs = self.needs(x) || self.needs(w);
        Ok(self.push(vec![m, n], out, Op::Linear(x, w), needs))
    }

    /// Adds a length-`c` bias to every row of an `r × c` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.dims(x);
        let (br, bc) = self.dims(bias);
        if br != 1 || bc != c {
            return Err(self.dim_err("add_bias", x, bias));
        }
        let b = self.value(bias);
        let mut out = self.value(x).to_vec();
        for row in out.chunks_mut(c.max(1)).take(r) {
            row.iter_mut().zip(b).for_each(|(o, b)| *o += b);
        }
        let needs = self.needs(x) || self.needs(bias);
        let shape = self.shape(x).to_vec();
        Ok(self.push(shape, out, Op::AddBias(x, bias), needs))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        if self.dims(a) != self.dims(b) {
            return Err(self.dim_err(name, a, b));
        }
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| f(*x, *y))
            .collect();
        let needs = self.needs(a) || self.needs(b);
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, op, needs))
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
        let (shape, needs) = (self.shape(x).to_vec(), self.needs(x));
        self.push(shape, out, Op::Scale(x, c), needs)
    }

    pub fn unary(&mut self, x: Var, kind: Unary) -> Var {
        let out = self.value(x).iter().map(|v| kind.apply(*v)).collect();
        let (shape, needs) = (self.shape(x).to_vec(), self.needs(x));
        self.push(shape, out, Op::Unary(x, kind), needs)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Tanh)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Sigmoid)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Exp)
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Log)
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Result<Var> {
        if lo > hi || lo.is_nan() || hi.is_nan() {
            return Err(contract(format!("clamp: lo {lo} > hi {hi}")));
        }
        let out = self.value(x).iter().map(|v| v.clamp(lo, hi)).collect();
        let (shape, needs) = (self.shape(x).to_vec(), self.needs(x));
        Ok(self.push(shape, out, Op::Clamp(x, lo, hi), needs))
    }

    /// Concatenates along `axis` (0 = rows, 1 = columns) in argument order.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| contract("concat: no parts"))?;
        if parts.len() == 1 {
            return Ok(first);
        }
        let (r0, c0) = self.dims(first);
        let out = match axis {
            0 => {
                let mut rows = 0;
                for &p in parts {
                    let (r, c) = self.dims(p);
                    if c != c0 {
                        return Err(self.dim_err("concat", first, p));
                    }
                    rows += r;
                }
                let mut out = Vec::with_capacity(rows * c0);
                for &p in parts {
                    out.extend_from_slice(self.value(p));
                }
                (vec![rows, c0], out)
            }
            1 => {
                let mut cols = 0;
                for &p in parts {
                    let (r, c) = self.dims(p);
                    if r != r0 {
                        return Err(self.dim_err("concat", first, p));
                    }
                    cols += c;
                }
                let mut out = Vec::with_capacity(r0 * cols);
                for row in 0..r0 {
                    for &p in parts {
                        let (_, c) = self.dims(p);
                        out.extend_from_slice(&self.value(p)[row * c..(row + 1) * c]);
                    }
                }
                (vec![r0, cols], out)
            }
            _ => return Err(contract(format!("concat: axis {axis} out of range"))),
        };
        let needs = parts.iter().any(|p| self.needs(*p));
        Ok(self.push(out.0, out.1, Op::Concat(parts.to_vec(), axis), needs))
    }

    /// Columns `start..start + len` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.dims(x);
        if start + len > c {
            return Err(contract(format!(
                "slice_cols: {start}..{} out of {c} columns",
                start + len
            )));
        }
        let src = self.value(x);
        let mut out = Vec::with_capacity(r * len);
        for row in 0..r {
            out.extend_from_slice(&src[row * c + start..row * c + start + len]);
        }
        let needs = self.needs(x);
        Ok(self.push(vec![r, len], out, Op::SliceCols(x, start), needs))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        let needs = self.needs(x);
        self.push(vec![], vec![s], Op::Sum(x), needs)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.iter().sum::<f64>() / v.len().max(1) as f64;
        let needs = self.needs(x);
        self.push(vec![], vec![s], Op::Mean(x), needs)
    }

    /// Mean squared difference of two same-shape tensors.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        if self.dims(pred) != self.dims(target) {
            return Err(self.dim_err("mse", pred, target));
        }
        let n = self.value(pred).len().max(1) as f64;
        let s = self
            .value(pred)
            .iter()
            .zip(self.value(target))
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / n;
        let needs = self.needs(pred) || self.needs(target);
        Ok(self.push(vec![], vec![s], Op::Mse(pred, target), needs))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax(&mut self, x: Var) -> Var {
        let (r, c) = self.dims(x);
        let mut out = self.value(x).to_vec();
        for row in out.chunks_mut(c.max(1)).take(r) {
            softmax_in_place(row);
        }
        let (shape, needs) = (self.shape(x).to_vec(), self.needs(x));
        self.push(shape, out, Op::Softmax(x), needs)
    }

    /// Records a fused operation whose value was computed by the caller.
    pub fn custom(
        &mut self,
        inputs: &[Var],
        shape: &[usize],
        value: Vec<f64>,
        backward: Box<dyn CustomBackward>,
    ) -> Result<Var> {
        let t = Tensor::new(shape, value)?;
        let needs = inputs.iter().any(|v| self.needs(*v));
        Ok(self.push(t.shape, t.values, Op::Custom(inputs.to_vec(), backward), needs))
    }

    fn dim_err(&self, op: &'static str, a: Var, b: Var) -> Error {
        Error::Dimension {
            op,
            lhs: self.shape(a).to_vec(),
            rhs: self.shape(b).to_vec(),
        }
    }

    /// Gradient of the last `backward` call with respect to `v`, if any reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Reverse sweep from a scalar `loss`. Each node is visited once, in
    /// reverse append order; repeated uses of a node accumulate.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.dims(*a);
                let (_, n) = self.dims(*b);
                if self.needs(*a) {
                    let buf = grad_buf(grads, *a, m * k);
                    gemm(m, n, k, g, false, self.value(*b), true, buf, 1.0);
                }
                if self.needs(*b) {
                    let buf = grad_buf(grads, *b, k * n);
                    gemm(k, m, n, self.value(*a), true, g, false, buf, 1.0);
                }
            }
            Op::Linear(x, w) => {
                let (m, k) = self.dims(*x);
                let (n, _) = self.dims(*w);
                if self.needs(*x) {
                    let buf = grad_buf(grads, *x, m * k);
                    gemm(m, n, k, g, false, self.value(*w), false, buf, 1.0);
                }
                if self.needs(*w) {
                    let buf = grad_buf(grads, *w, n * k);
                    gemm(n, m, k, g, true, self.value(*x), false, buf, 1.0);
                }
            }
            Op::AddBias(x, b) => {
                if self.needs(*x) {
                    accumulate(grad_buf(grads, *x, g.len()), g);
                }
                if self.needs(*b) {
                    let c = self.value(*b).len();
                    let buf = grad_buf(grads, *b, c);
                    for row in g.chunks(c.max(1)) {
                        accumulate(buf, row);
                    }
                }
            }
            Op::Add(a, b) => {
                if self.needs(*a) {
                    accumulate(grad_buf(grads, *a, g.len()), g);
                }
                if self.needs(*b) {
                    accumulate(grad_buf(grads, *b, g.len()), g);
                }
            }
            Op::Sub(a, b) => {
                if self.needs(*a) {
                    accumulate(grad_buf(grads, *a, g.len()), g);
                }
                if self.needs(*b) {
                    let buf = grad_buf(grads, *b, g.len());
                    buf.iter_mut().zip(g).for_each(|(d, g)| *d -= g);
                }
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    let other = self.value(*b);
                    let buf = grad_buf(grads, *a, g.len());
                    for ((d, g), o) in buf.iter_mut().zip(g).zip(other) {
                        *d += g * o;
                    }
                }
                if self.needs(*b) {
                    let other = self.value(*a);
                    let buf = grad_buf(grads, *b, g.len());
                    for ((d, g), o) in buf.iter_mut().zip(g).zip(other) {
                        *d += g * o;
                    }
                }
            }
            Op::Scale(x, c) => {
                let buf = grad_buf(grads, *x, g.len());
                buf.iter_mut().zip(g).for_each(|(d, g)| *d += g * c);
            }
            Op::Unary(x, kind) => {
                let xs = self.value(*x);
                let ys = &node.value;
                let buf = grad_buf(grads, *x, g.len());
                for (((d, g), xv), yv) in buf.iter_mut().zip(g).zip(xs).zip(ys) {
                    *d += g * kind.derivative(*xv, *yv);
                }
            }
            Op::Clamp(x, lo, hi) => {
                let xs = self.value(*x);
                let buf = grad_buf(grads, *x, g.len());
                for ((d, g), xv) in buf.iter_mut().zip(g).zip(xs) {
                    if *xv >= *lo && *xv <= *hi {
                        *d += g;
                    }
                }
            }
            Op::Concat(parts, axis) => {
                if *axis == 0 {
                    let mut offset = 0;
                    for p in parts {
                        let len = self.value(*p).len();
                        if self.needs(*p) {
                            accumulate(grad_buf(grads, *p, len), &g[offset..offset + len]);
                        }
                        offset += len;
                    }
                } else {
                    let (rows, total) = matrix_dims(&node.shape);
                    let mut col = 0;
                    for p in parts {
                        let (_, c) = self.dims(*p);
                        if self.needs(*p) {
                            let buf = grad_buf(grads, *p, rows * c);
                            for r in 0..rows {
                                accumulate(
                                    &mut buf[r * c..(r + 1) * c],
                                    &g[r * total + col..r * total + col + c],
                                );
                            }
                        }
                        col += c;
                    }
                }
            }
            Op::SliceCols(x, start) => {
                let (rows, c) = self.dims(*x);
                let (_, len) = matrix_dims(&node.shape);
                let buf = grad_buf(grads, *x, rows * c);
                for r in 0..rows {
                    accumulate(
                        &mut buf[r * c + start..r * c + start + len],
                        &g[r * len..(r + 1) * len],
                    );
                }
            }
            Op::Sum(x) => {
                let n = self.value(*x).len();
                grad_buf(grads, *x, n).iter_mut().for_each(|d| *d += g[0]);
            }
            Op::Mean(x) => {
                let n = self.value(*x).len();
                let s = g[0] / n.max(1) as f64;
                grad_buf(grads, *x, n).iter_mut().for_each(|d| *d += s);
            }
            Op::Mse(p, t) => {
                let n = self.value(*p).len();
                let s = 2.0 * g[0] / n.max(1) as f64;
                let diff: Vec<f64> = self
                    .value(*p)
                    .iter()
                    .zip(self.value(*t))
                    .map(|(p, t)| s * (p - t))
                    .collect();
                if self.needs(*p) {
                    accumulate(grad_buf(grads, *p, n), &diff);
                }
                if self.needs(*t) {
                    let buf = grad_buf(grads, *t, n);
                    buf.iter_mut().zip(&diff).for_each(|(d, v)| *d -= v);
                }
            }
            Op::Softmax(x) => {
                let (_, c) = self.dims(*x);
                let ys = &node.value;
                let buf = grad_buf(grads, *x, g.len());
                for ((drow, grow), yrow) in buf
                    .chunks_mut(c.max(1))
                    .zip(g.chunks(c.max(1)))
                    .zip(ys.chunks(c.max(1)))
                {
                    let dot: f64 = grow.iter().zip(yrow).map(|(g, y)| g * y).sum();
                    for ((d, g), y) in drow.iter_mut().zip(grow).zip(yrow) {
                        *d += y * (g - dot);
                    }
                }
            }
            Op::Custom(inputs, rule) => {
                let needs: Vec<bool> = inputs.iter().map(|v| self.needs(*v)).collect();
                let input_grads = rule.backward(g, &needs);
                debug_assert_eq!(input_grads.len(), inputs.len());
                for ((v, ig), need) in inputs.iter().zip(input_grads).zip(needs) {
                    if let (Some(ig), true) = (ig, need) {
                        let n = self.value(*v).len();
                        accumulate(grad_buf(grads, *v, n), &ig);
                    }
                }
            }
        }
    }
}

fn grad_buf(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn accumulate(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}

/// `c = op(a) · op(b) + beta · c` where `op(a)` is `m × k` and `op(b)` is `k × n`,
/// all buffers row-major.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    c: &mut [f64],
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // Row-major `[m × k]` has strides (k, 1); its transpose view swaps them.
    let (rsa, csa) = if a_trans { (1, m) } else { (k, 1) };
    let (rsb, csb) = if b_trans { (1, k) } else { (n, 1) };
    // SAFETY: buffer lengths were checked above against the stride extents.
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
            n as isize,
            1,
        );
    }
}
