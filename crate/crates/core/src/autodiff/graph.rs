//! Tape of recorded operations and the reverse sweep.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use super::Tensor;
use crate::error::{FriError, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Leaf,
    Add(Var, Var),
    AddBias(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    Conv1d { x: Var, w: Var, cols: Vec<f64> },
    Gelu { x: Var, cdf: Vec<f64> },
    Reshape(Var),
    ReduceSum(Var),
    Abs(Var),
    NormalizeMaxAbs { x: Var, scale: Vec<f64>, argmax: Vec<usize> },
    Linearized { input: Var, jacobian: Tensor },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records values and operation lineage. Nodes are appended in evaluation
/// order, so the node list is already a topological order of the DAG.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to every node that requires them.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> FriError {
    FriError::Shape {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn gelu_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `C (m×n) = A (m×k) · B (k×n)` with explicit strides; `beta` scales the old `C`.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], rsa: isize, csa: isize, b: &[f64], rsb: isize, csb: isize, beta: f64, c: &mut [f64]) {
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: callers size `a`, `b`, `c` for the given dimensions and strides;
    // `c` is a contiguous row-major m×n block.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Leaf that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf whose gradient is tracked.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn elementwise(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(name, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.elementwise(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Add(a, b), rg))
    }

    /// Adds a bias broadcast along axis 1: `(B, C, N) + (C)` or `(B, H) + (H)`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let s = tx.shape();
        if !(s.len() == 2 || s.len() == 3) || tb.shape() != [s[1]] {
            return Err(shape_err("add_bias", tx, tb));
        }
        let inner = if s.len() == 3 { s[2] } else { 1 };
        let c = s[1];
        let mut out = tx.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += tb.data()[(i / inner) % c];
        }
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(out, Op::AddBias(x, bias), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.elementwise(a, b, "sub", |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.elementwise(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Mul(a, b), rg))
    }

    /// Multiplies by a constant.
    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let mut v = self.value(a).clone();
        v.data_mut().iter_mut().for_each(|x| *x *= c);
        let rg = self.rg(a);
        self.push(v, Op::Scale(a, c), rg)
    }

    /// `(M, K) · (K, N)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(shape_err("matmul", ta, tb));
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, ta.data(), k as isize, 1, tb.data(), n as isize, 1, 0.0, &mut out);
        let v = Tensor::new(vec![m, n], out)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::MatMul(a, b), rg))
    }

    /// Stride-1 convolution with zero padding that preserves the length.
    /// `x: (B, C_in, N)`, `w: (C_out, C_in, K)` with odd `K`.
    pub fn conv1d(&mut self, x: Var, w: Var) -> Result<Var> {
        let (tx, tw) = (self.value(x), self.value(w));
        let (sx, sw) = (tx.shape(), tw.shape());
        if sx.len() != 3 || sw.len() != 3 || sx[1] != sw[1] || sw[2] % 2 == 0 {
            return Err(shape_err("conv1d", tx, tw));
        }
        let (b, ci, n) = (sx[0], sx[1], sx[2]);
        let (co, k) = (sw[0], sw[2]);
        let pad = k / 2;
        let bn = b * n;
        let rows = ci * k;
        let mut cols = vec![0.0; rows * bn];
        let xd = tx.data();
        for c in 0..ci {
            for kk in 0..k {
                let row = &mut cols[(c * k + kk) * bn..(c * k + kk + 1) * bn];
                for bi in 0..b {
                    let src = &xd[(bi * ci + c) * n..(bi * ci + c + 1) * n];
                    let dst = &mut row[bi * n..(bi + 1) * n];
                    for (j, d) in dst.iter_mut().enumerate() {
                        let s = j as isize + kk as isize - pad as isize;
                        if s >= 0 && (s as usize) < n {
                            *d = src[s as usize];
                        }
                    }
                }
            }
        }
        let mut mat = vec![0.0; co * bn];
        gemm(co, rows, bn, tw.data(), rows as isize, 1, &cols, bn as isize, 1, 0.0, &mut mat);
        let mut out = vec![0.0; b * co * n];
        for o in 0..co {
            for bi in 0..b {
                out[(bi * co + o) * n..(bi * co + o + 1) * n].copy_from_slice(&mat[o * bn + bi * n..o * bn + (bi + 1) * n]);
            }
        }
        let v = Tensor::new(vec![b, co, n], out)?;
        let rg = self.rg(x) || self.rg(w);
        Ok(self.push(v, Op::Conv1d { x, w, cols }, rg))
    }

    /// Exact GELU, `x·Φ(x)`.
    pub fn gelu(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let cdf: Vec<f64> = tx.data().iter().map(|v| 0.5 * libm::erfc(-v * FRAC_1_SQRT_2)).collect();
        let data = tx.data().iter().zip(&cdf).map(|(v, p)| v * p).collect();
        let value = Tensor::new(tx.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(x);
        self.push(value, Op::Gelu { x, cdf }, rg)
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let tx = self.value(x);
        if shape.iter().product::<usize>() != tx.len() || shape.len() > 3 {
            return Err(FriError::Shape {
                op: "reshape",
                left: tx.shape().to_vec(),
                right: shape,
            });
        }
        let v = tx.reshaped(shape);
        let rg = self.rg(x);
        Ok(self.push(v, Op::Reshape(x), rg))
    }

    /// Collapses every axis after the first.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.is_empty() {
            return Err(FriError::Shape {
                op: "flatten",
                left: s,
                right: vec![],
            });
        }
        let rest = s[1..].iter().product();
        self.reshape(x, vec![s[0], rest])
    }

    pub fn reduce_sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::ReduceSum(x), rg)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let data = tx.data().iter().map(|v| v.abs()).collect();
        let v = Tensor::new(tx.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(x);
        self.push(v, Op::Abs(x), rg)
    }

    /// Divides each row of a `(B, N)` tensor by its maximum absolute value.
    /// All-zero rows pass through unchanged.
    pub fn normalize_max_abs(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        if tx.shape().len() != 2 {
            return Err(FriError::Shape {
                op: "normalize_max_abs",
                left: tx.shape().to_vec(),
                right: vec![0, 0],
            });
        }
        let (b, n) = (tx.shape()[0], tx.shape()[1]);
        let mut scale = vec![1.0; b];
        let mut argmax = vec![0; b];
        let mut out = tx.data().to_vec();
        for r in 0..b {
            let row = &mut out[r * n..(r + 1) * n];
            let (idx, m) = row
                .iter()
                .enumerate()
                .fold((0, 0.0f64), |(bi, bm), (i, v)| if v.abs() > bm { (i, v.abs()) } else { (bi, bm) });
            argmax[r] = idx;
            if m > 0.0 {
                scale[r] = m;
                row.iter_mut().for_each(|v| *v /= m);
            }
        }
        let v = Tensor::new(vec![b, n], out)?;
        let rg = self.rg(x);
        Ok(self.push(v, Op::NormalizeMaxAbs { x, scale, argmax }, rg))
    }

    /// A node whose value is computed outside the graph, with its Jacobian with
    /// respect to a vector `input` supplied explicitly (rows follow the
    /// row-major order of `value`, columns the elements of `input`).
    pub fn linearized(&mut self, input: Var, value: Tensor, jacobian: Tensor) -> Result<Var> {
        let p = self.value(input).len();
        if jacobian.shape() != [value.len(), p] {
            return Err(FriError::Shape {
                op: "linearized",
                left: vec![value.len(), p],
                right: jacobian.shape().to_vec(),
            });
        }
        let rg = self.rg(input);
        Ok(self.push(value, Op::Linearized { input, jacobian }, rg))
    }

    /// Reverse sweep from a scalar root. Gradients accumulate over every use of a node.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if self.value(root).len() != 1 {
            return Err(FriError::Shape {
                op: "backward",
                left: self.value(root).shape().to_vec(),
                right: vec![],
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::new(self.value(root).shape().to_vec(), vec![1.0])?);

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn with_data(&self, like: Var, data: Vec<f64>) -> Tensor {
        Tensor::new(self.value(like).shape().to_vec(), data).expect("gradient matches value shape")
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::AddBias(x, bias) => {
                self.accumulate(grads, *x, g.clone());
                if self.rg(*bias) {
                    let s = g.shape();
                    let inner = if s.len() == 3 { s[2] } else { 1 };
                    let c = s[1];
                    let mut gb = vec![0.0; c];
                    for (i, v) in gd.iter().enumerate() {
                        gb[(i / inner) % c] += v;
                    }
                    self.accumulate(grads, *bias, Tensor::vector(gb));
                }
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                if self.rg(*b) {
                    self.accumulate(grads, *b, self.with_data(*b, gd.iter().map(|v| -v).collect()));
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                if self.rg(*a) {
                    self.accumulate(grads, *a, self.with_data(*a, gd.iter().zip(vb).map(|(g, y)| g * y).collect()));
                }
                if self.rg(*b) {
                    self.accumulate(grads, *b, self.with_data(*b, gd.iter().zip(va).map(|(g, x)| g * x).collect()));
                }
            }
            Op::Scale(a, c) => {
                self.accumulate(grads, *a, self.with_data(*a, gd.iter().map(|v| v * c).collect()));
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if self.rg(*a) {
                    let mut ga = vec![0.0; m * k];
                    gemm(m, n, k, gd, n as isize, 1, tb.data(), 1, n as isize, 0.0, &mut ga);
                    self.accumulate(grads, *a, self.with_data(*a, ga));
                }
                if self.rg(*b) {
                    let mut gb = vec![0.0; k * n];
                    gemm(k, m, n, ta.data(), 1, k as isize, gd, n as isize, 1, 0.0, &mut gb);
                    self.accumulate(grads, *b, self.with_data(*b, gb));
                }
            }
            Op::Conv1d { x, w, cols } => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                let (b, ci, n) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
                let (co, k) = (tw.shape()[0], tw.shape()[2]);
                let pad = k / 2;
                let bn = b * n;
                let rows = ci * k;
                let mut gmat = vec![0.0; co * bn];
                for o in 0..co {
                    for bi in 0..b {
                        gmat[o * bn + bi * n..o * bn + (bi + 1) * n].copy_from_slice(&gd[(bi * co + o) * n..(bi * co + o + 1) * n]);
                    }
                }
                if self.rg(*w) {
                    let mut gw = vec![0.0; co * rows];
                    gemm(co, bn, rows, &gmat, bn as isize, 1, cols, 1, bn as isize, 0.0, &mut gw);
                    self.accumulate(grads, *w, self.with_data(*w, gw));
                }
                if self.rg(*x) {
                    let mut gcols = vec![0.0; rows * bn];
                    gemm(rows, co, bn, tw.data(), 1, rows as isize, &gmat, bn as isize, 1, 0.0, &mut gcols);
                    let mut gx = vec![0.0; b * ci * n];
                    for c in 0..ci {
                        for kk in 0..k {
                            let row = &gcols[(c * k + kk) * bn..(c * k + kk + 1) * bn];
                            for bi in 0..b {
                                let dst = &mut gx[(bi * ci + c) * n..(bi * ci + c + 1) * n];
                                for j in 0..n {
                                    let s = j as isize + kk as isize - pad as isize;
                                    if s >= 0 && (s as usize) < n {
                                        dst[s as usize] += row[bi * n + j];
                                    }
                                }
                            }
                        }
                    }
                    self.accumulate(grads, *x, self.with_data(*x, gx));
                }
            }
            Op::Gelu { x, cdf } => {
                let vx = self.value(*x).data();
                let data = gd
                    .iter()
                    .zip(vx)
                    .zip(cdf)
                    .map(|((g, v), p)| g * (p + v * gelu_pdf(*v)))
                    .collect();
                self.accumulate(grads, *x, self.with_data(*x, data));
            }
            Op::Reshape(x) => {
                self.accumulate(grads, *x, self.with_data(*x, gd.to_vec()));
            }
            Op::ReduceSum(x) => {
                let n = self.value(*x).len();
                self.accumulate(grads, *x, self.with_data(*x, vec![gd[0]; n]));
            }
            Op::Abs(x) => {
                let vx = self.value(*x).data();
                let data = gd
                    .iter()
                    .zip(vx)
                    .map(|(g, v)| if *v > 0.0 { *g } else if *v < 0.0 { -g } else { 0.0 })
                    .collect();
                self.accumulate(grads, *x, self.with_data(*x, data));
            }
            Op::NormalizeMaxAbs { x, scale, argmax } => {
                let tx = self.value(*x);
                let n = tx.shape()[1];
                let mut gx = vec![0.0; tx.len()];
                for (r, (&m, &j)) in scale.iter().zip(argmax).enumerate() {
                    let xs = &tx.data()[r * n..(r + 1) * n];
                    let gs = &gd[r * n..(r + 1) * n];
                    let dst = &mut gx[r * n..(r + 1) * n];
                    if xs[j] == 0.0 {
                        dst.copy_from_slice(gs);
                        continue;
                    }
                    let dot: f64 = gs.iter().zip(xs).map(|(g, v)| g * v).sum();
                    for (d, g) in dst.iter_mut().zip(gs) {
                        *d = g / m;
                    }
                    dst[j] -= xs[j].signum() * dot / (m * m);
                }
                self.accumulate(grads, *x, self.with_data(*x, gx));
            }
            Op::Linearized { input, jacobian } => {
                let (rows, p) = (jacobian.shape()[0], jacobian.shape()[1]);
                let mut gi = vec![0.0; p];
                gemm(p, rows, 1, jacobian.data(), 1, p as isize, gd, 1, 1, 0.0, &mut gi);
                self.accumulate(grads, *input, self.with_data(*input, gi));
            }
        }
    }
}
