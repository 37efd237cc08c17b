//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! A [`Graph`] records every operation applied to its [`Var`]s. Parameters
//! are read straight out of a borrowed [`ParamStore`]; calling
//! [`Graph::backward`] on a scalar node returns [`Gradients`] keyed by
//! parameter id. Every value on the tape is a 2-D matrix; column vectors are
//! `n x 1`.

use std::collections::HashMap;

use super::ops::{elu, sigmoid, softmax_unchecked};
use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::{matmul_into, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Param(ParamId),
    Const,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Elu(Var),
    LeakyRelu(Var, f64),
    Abs(Var),
    Sum(Var),
    VStack(Vec<Var>),
    HStack(Vec<Var>),
    SliceRows(Var, usize),
    Transpose(Var),
    Reshape(Var),
    EmbedMean(ParamId, Vec<usize>),
    MaxOf(Vec<Var>, Vec<usize>),
    Softmax(Var),
    LogSoftmax(Var),
    Pick(Var, usize),
}

struct Node {
    value: Option<Tensor>,
    op: Op,
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
}

fn mat(rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
    Tensor::matrix(rows, cols, data)
}

fn as_matrix(t: Tensor) -> Tensor {
    let (r, c) = (t.rows(), t.cols());
    t.reshape(&[r, c]).expect("2-d view")
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.params.tensor(*id),
            _ => unreachable!("node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let t = self.value(v);
        (t.rows(), t.cols())
    }

    /// Value as a flat vector (row-major).
    pub fn to_vec(&self, v: Var) -> Vec<f64> {
        self.value(v).data().to_vec()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).data()[0]
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    pub fn param_named(&mut self, name: &str) -> Result<Var> {
        let id = self
            .params
            .id(name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter {name}")))?;
        Ok(self.param(id))
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(as_matrix(t), Op::Const)
    }

    pub fn column(&mut self, data: Vec<f64>) -> Var {
        let n = data.len();
        self.push(mat(n, 1, data), Op::Const)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(Error::shape("matmul", format!("{m}x{k} · {k2}x{n}")));
        }
        let mut out = vec![0.0; m * n];
        matmul_into(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        Ok(self.push(mat(m, n, out), Op::MatMul(a, b)))
    }

    fn zip(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return Err(Error::shape(name, format!("{sa:?} vs {sb:?}")));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| f(*x, *y))
            .collect();
        Ok(self.push(mat(sa.0, sa.1, data), op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let v = self.value(a).map(f);
        self.push(v, op)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, |x| x * s, Op::Scale(a, s))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn elu(&mut self, a: Var) -> Var {
        self.unary(a, elu, Op::Elu(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.unary(a, |x| super::ops::leaky_relu(x, slope), Op::LeakyRelu(a, slope))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, f64::abs, Op::Abs(a))
    }

    /// Sum of all entries, as a `1 x 1` node.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(mat(1, 1, vec![s]), Op::Sum(a))
    }

    /// L1 norm of all entries.
    pub fn l1(&mut self, a: Var) -> Var {
        let abs = self.abs(a);
        self.sum(abs)
    }

    /// Sum of a non-empty list of same-shaped nodes.
    pub fn add_all(&mut self, vars: &[Var]) -> Result<Var> {
        let (&first, rest) = vars
            .split_first()
            .ok_or_else(|| Error::InvalidArgument("add_all of nothing".into()))?;
        let mut acc = first;
        for &v in rest {
            acc = self.add(acc, v)?;
        }
        Ok(acc)
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn vstack(&mut self, vars: &[Var]) -> Result<Var> {
        if vars.is_empty() {
            return Err(Error::InvalidArgument("vstack of nothing".into()));
        }
        let cols = self.shape(vars[0]).1;
        let mut data = Vec::new();
        let mut rows = 0;
        for &v in vars {
            let (r, c) = self.shape(v);
            if c != cols {
                return Err(Error::shape("vstack", format!("{c} cols vs {cols}")));
            }
            rows += r;
            data.extend_from_slice(self.value(v).data());
        }
        Ok(self.push(mat(rows, cols, data), Op::VStack(vars.to_vec())))
    }

    /// Places column vectors side by side into a `d x n` matrix.
    pub fn hstack(&mut self, vars: &[Var]) -> Result<Var> {
        if vars.is_empty() {
            return Err(Error::InvalidArgument("hstack of nothing".into()));
        }
        let d = self.shape(vars[0]).0;
        let n = vars.len();
        let mut data = vec![0.0; d * n];
        for (j, &v) in vars.iter().enumerate() {
            let (r, c) = self.shape(v);
            if r != d || c != 1 {
                return Err(Error::shape("hstack", format!("{r}x{c}, expected {d}x1")));
            }
            for (i, x) in self.value(v).data().iter().enumerate() {
                data[i * n + j] = *x;
            }
        }
        Ok(self.push(mat(d, n, data), Op::HStack(vars.to_vec())))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if start + len > r || len == 0 {
            return Err(Error::shape("slice_rows", format!("{start}+{len} of {r}")));
        }
        let data = self.value(a).data()[start * c..(start + len) * c].to_vec();
        Ok(self.push(mat(len, c, data), Op::SliceRows(a, start)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let t = self.value(a).transpose();
        self.push(t, Op::Transpose(a))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let t = self.value(a).clone().reshape(&[rows, cols])?;
        Ok(self.push(t, Op::Reshape(a)))
    }

    /// Mean of the selected rows of an embedding parameter, as a column.
    pub fn embed_mean(&mut self, table: ParamId, rows: &[usize]) -> Result<Var> {
        let t = self.params.tensor(table);
        if rows.is_empty() {
            return Err(Error::InvalidArgument("embed_mean of no rows".into()));
        }
        let d = t.cols();
        let mut out = vec![0.0; d];
        for &r in rows {
            if r >= t.rows() {
                return Err(Error::shape("embed_mean", format!("row {r} of {}", t.rows())));
            }
            for (o, x) in out.iter_mut().zip(t.row(r)) {
                *o += x;
            }
        }
        let inv = 1.0 / rows.len() as f64;
        out.iter_mut().for_each(|o| *o *= inv);
        Ok(self.push(mat(d, 1, out), Op::EmbedMean(table, rows.to_vec())))
    }

    pub fn embed_row(&mut self, table: ParamId, row: usize) -> Result<Var> {
        self.embed_mean(table, &[row])
    }

    /// Elementwise maximum over same-shaped nodes; ties go to the earliest.
    pub fn max_of(&mut self, vars: &[Var]) -> Result<Var> {
        if vars.is_empty() {
            return Err(Error::InvalidArgument("max_of nothing".into()));
        }
        let (r, c) = self.shape(vars[0]);
        let mut best = self.value(vars[0]).data().to_vec();
        let mut arg = vec![0usize; r * c];
        for (k, &v) in vars.iter().enumerate().skip(1) {
            if self.shape(v) != (r, c) {
                return Err(Error::shape("max_of", "mismatched inputs"));
            }
            for (i, x) in self.value(v).data().iter().enumerate() {
                if *x > best[i] {
                    best[i] = *x;
                    arg[i] = k;
                }
            }
        }
        Ok(self.push(mat(r, c, best), Op::MaxOf(vars.to_vec(), arg)))
    }

    /// Softmax over all entries of `a`.
    pub fn softmax(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let p = softmax_unchecked(self.value(a).data());
        self.push(mat(r, c, p), Op::Softmax(a))
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let x = self.value(a).data();
        let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let out = x.iter().map(|v| v - lse).collect();
        self.push(mat(r, c, out), Op::LogSoftmax(a))
    }

    /// Single entry (flat index) as a `1 x 1` node.
    pub fn pick(&mut self, a: Var, index: usize) -> Result<Var> {
        let t = self.value(a);
        if index >= t.len() {
            return Err(Error::shape("pick", format!("{index} of {}", t.len())));
        }
        let v = t.data()[index];
        Ok(self.push(mat(1, 1, vec![v]), Op::Pick(a, index)))
    }

    /// `W x + b` for a weight `rows x cols` and bias `rows x 1`.
    pub fn affine(&mut self, w: ParamId, b: ParamId, x: Var) -> Result<Var> {
        let wv = self.param(w);
        let bv = self.param(b);
        let y = self.matmul(wv, x)?;
        self.add(y, bv)
    }

    pub fn linear(&mut self, w: ParamId, x: Var) -> Result<Var> {
        let wv = self.param(w);
        self.matmul(wv, x)
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if self.shape(root) != (1, 1) {
            return Err(Error::shape("backward", "root must be a scalar"));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        grads[root.0] = Some(mat(1, 1, vec![1.0]));
        let mut out = Gradients::new(self.params.len());

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Const => {}
                Op::Param(id) => {
                    let shape = self.params.tensor(*id).shape().to_vec();
                    out.add_dense(*id, g.reshape(&shape)?);
                }
                Op::EmbedMean(id, rows) => {
                    let t = self.params.tensor(*id);
                    let w = 1.0 / rows.len() as f64;
                    out.add_rows(*id, t.shape(), rows, g.data(), w);
                }
                Op::MatMul(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let (m, k) = (av.rows(), av.cols());
                    let n = bv.cols();
                    // dA = G · Bᵀ
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        for p in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                s += g.data()[i * n + j] * bv.data()[p * n + j];
                            }
                            da[i * k + p] = s;
                        }
                    }
                    // dB = Aᵀ · G
                    let mut db = vec![0.0; k * n];
                    for i in 0..m {
                        for p in 0..k {
                            let a_ip = av.data()[i * k + p];
                            if a_ip == 0.0 {
                                continue;
                            }
                            for j in 0..n {
                                db[p * n + j] += a_ip * g.data()[i * n + j];
                            }
                        }
                    }
                    accumulate(&mut grads, *a, mat(m, k, da));
                    accumulate(&mut grads, *b, mat(k, n, db));
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.map(|x| -x));
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = zip_map(&g, self.value(*b), |x, y| x * y);
                    let gb = zip_map(&g, self.value(*a), |x, y| x * y);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(a, s) => accumulate(&mut grads, *a, g.map(|x| x * s)),
                Op::Tanh(a) => {
                    let y = node.value.as_ref().expect("value");
                    accumulate(&mut grads, *a, zip_map(&g, y, |g, y| g * (1.0 - y * y)));
                }
                Op::Sigmoid(a) => {
                    let y = node.value.as_ref().expect("value");
                    accumulate(&mut grads, *a, zip_map(&g, y, |g, y| g * y * (1.0 - y)));
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    accumulate(&mut grads, *a, zip_map(&g, x, |g, x| if x > 0.0 { g } else { 0.0 }));
                }
                Op::Elu(a) => {
                    let x = self.value(*a);
                    accumulate(&mut grads, *a, zip_map(&g, x, |g, x| if x > 0.0 { g } else { g * x.exp() }));
                }
                Op::LeakyRelu(a, slope) => {
                    let x = self.value(*a);
                    let s = *slope;
                    accumulate(&mut grads, *a, zip_map(&g, x, |g, x| if x >= 0.0 { g } else { g * s }));
                }
                Op::Abs(a) => {
                    let x = self.value(*a);
                    accumulate(&mut grads, *a, zip_map(&g, x, |g, x| g * sign(x)));
                }
                Op::Sum(a) => {
                    let (r, c) = self.shape(*a);
                    accumulate(&mut grads, *a, Tensor::full(&[r, c], g.data()[0]));
                }
                Op::VStack(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let (r, c) = self.shape(p);
                        let slice = g.data()[offset * c..(offset + r) * c].to_vec();
                        accumulate(&mut grads, p, mat(r, c, slice));
                        offset += r;
                    }
                }
                Op::HStack(parts) => {
                    let n = parts.len();
                    for (j, &p) in parts.iter().enumerate() {
                        let d = self.shape(p).0;
                        let col = (0..d).map(|i| g.data()[i * n + j]).collect();
                        accumulate(&mut grads, p, mat(d, 1, col));
                    }
                }
                Op::SliceRows(a, start) => {
                    let (r, c) = self.shape(*a);
                    let mut full = vec![0.0; r * c];
                    full[start * c..start * c + g.len()].copy_from_slice(g.data());
                    accumulate(&mut grads, *a, mat(r, c, full));
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.transpose()),
                Op::Reshape(a) => {
                    let (r, c) = self.shape(*a);
                    accumulate(&mut grads, *a, g.reshape(&[r, c])?);
                }
                Op::MaxOf(parts, arg) => {
                    let (r, c) = self.shape(parts[0]);
                    let mut per: Vec<Vec<f64>> = vec![vec![0.0; r * c]; parts.len()];
                    for (i, &k) in arg.iter().enumerate() {
                        per[k][i] += g.data()[i];
                    }
                    for (p, d) in parts.iter().zip(per) {
                        accumulate(&mut grads, *p, mat(r, c, d));
                    }
                }
                Op::Softmax(a) => {
                    let y = node.value.as_ref().expect("value");
                    let dot: f64 = g.data().iter().zip(y.data()).map(|(g, y)| g * y).sum();
                    accumulate(&mut grads, *a, zip_map(&g, y, |g, y| y * (g - dot)));
                }
                Op::LogSoftmax(a) => {
                    let y = node.value.as_ref().expect("value");
                    let total: f64 = g.data().iter().sum();
                    accumulate(&mut grads, *a, zip_map(&g, y, |g, y| g - y.exp() * total));
                }
                Op::Pick(a, i) => {
                    let (r, c) = self.shape(*a);
                    let mut d = vec![0.0; r * c];
                    d[*i] = g.data()[0];
                    accumulate(&mut grads, *a, mat(r, c, d));
                }
            }
        }
        Ok(out)
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect();
    mat(a.rows(), a.cols(), data)
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(t) => t.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
