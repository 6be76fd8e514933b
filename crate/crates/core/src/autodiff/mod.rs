//! Small reverse-mode differentiation kernel over dense `f64` tensors.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters live in
//! a [`ParamStore`] and enter a tape as leaves; [`Tape::backward`] returns
//! dense gradients for every parameter that was touched.
//!
//! Subgradients at kinks: `abs'(0) = -1`, `relu'(0) = 0`, ties in
//! `minimum`/`maximum`/`min_axis0` go to the first argument, and `clamp`
//! passes the gradient on the closed interval.

mod check;
mod optim;
pub mod special;

use std::collections::HashMap;
use std::f64::consts::PI;

use thiserror::Error;

pub use check::{grad_check, GradCheckOptions, GradCheckReport};
pub use optim::Adam;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op} is undefined at {value}")]
    Domain { op: &'static str, value: f64 },
}

fn mismatch<T>(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Result<T, AutodiffError> {
    Err(AutodiffError::ShapeMismatch {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, AutodiffError> {
        if shape.iter().product::<usize>() != data.len() {
            return mismatch("tensor", &shape, &[data.len()]);
        }
        Ok(Self { shape, data })
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![],
            data: vec![v],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row `i` of a matrix.
    pub fn row(&self, i: usize) -> &[f64] {
        let cols = self.shape[1];
        &self.data[i * cols..(i + 1) * cols]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named parameter tensors, in declaration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }
}

/// Dense gradients keyed by parameter; untouched parameters are absent.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    grads: HashMap<ParamId, Tensor>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads.get(&id)
    }

    fn slot(&mut self, id: ParamId, shape: &[usize]) -> &mut [f64] {
        self.grads
            .entry(id)
            .or_insert_with(|| Tensor::zeros(shape))
            .data_mut()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    ParamRow { id: ParamId, row: usize, rows: usize },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    Scale(Var, f64),
    AddScalar(Var),
    MatVec(Var, Var),
    Concat(Vec<Var>),
    Stack(Vec<Var>),
    Slice(Var, usize),
    Sum(Var),
    SumAxis0(Var),
    MinAxis0(Var),
    Minimum(Var, Var),
    Maximum(Var, Var),
    Abs(Var),
    Relu(Var),
    Sigmoid(Var),
    Softplus(Var, f64),
    Log(Var),
    Exp(Var),
    Sin(Var),
    Cos(Var),
    Atan2(Var, Var),
    Clamp(Var, f64, f64),
    Softmax(Var, usize),
    Digamma(Var),
    Lgamma(Var),
    Recip(Var),
    Wrap(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Param(_) => "param",
            Op::ParamRow { .. } => "param_row",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Neg(_) => "neg",
            Op::Scale(..) => "scale",
            Op::AddScalar(_) => "add_scalar",
            Op::MatVec(..) => "matvec",
            Op::Concat(_) => "concat",
            Op::Stack(_) => "stack",
            Op::Slice(..) => "slice",
            Op::Sum(_) => "sum",
            Op::SumAxis0(_) => "sum_axis0",
            Op::MinAxis0(_) => "min_axis0",
            Op::Minimum(..) => "minimum",
            Op::Maximum(..) => "maximum",
            Op::Abs(_) => "abs",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Softplus(..) => "softplus",
            Op::Log(_) => "log",
            Op::Exp(_) => "exp",
            Op::Sin(_) => "sin",
            Op::Cos(_) => "cos",
            Op::Atan2(..) => "atan2",
            Op::Clamp(..) => "clamp",
            Op::Softmax(..) => "softmax",
            Op::Digamma(_) => "digamma",
            Op::Lgamma(_) => "lgamma",
            Op::Recip(_) => "recip",
            Op::Wrap(_) => "wrap",
        }
    }
}

/// Names accepted by [`Tape::inject_fault`].
pub const OP_NAMES: &[&str] = &[
    "add", "sub", "mul", "div", "neg", "scale", "add_scalar", "matvec", "concat", "stack", "slice",
    "sum", "sum_axis0", "min_axis0", "minimum", "maximum", "abs", "relu", "sigmoid", "softplus",
    "log", "exp", "sin", "cos", "atan2", "clamp", "softmax", "digamma", "lgamma", "recip", "wrap",
];

struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64, beta: f64) -> f64 {
    let z = beta * x;
    if z > 0.0 {
        x + (-z).exp().ln_1p() / beta
    } else {
        z.exp().ln_1p() / beta
    }
}

/// Maps an angle into `[-pi, pi)`.
pub fn wrap_angle(x: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let y = x - two_pi * ((x + PI) / two_pi).floor();
    if y >= PI {
        y - two_pi
    } else {
        y
    }
}

fn sign_class(x: f64) -> i32 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// One forward pass. Nodes are appended in evaluation order, so the tape is
/// topologically sorted by construction.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    rows: HashMap<(ParamId, usize), Var>,
    branches: Vec<i32>,
    fault: Option<&'static str>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Deliberately corrupts the backward rule of `op` (scales its input
    /// gradients by 1.5). Used to prove that gradient checks can fail.
    pub fn inject_fault(&mut self, op: &str) -> bool {
        match OP_NAMES.iter().find(|n| **n == op) {
            Some(n) => {
                self.fault = Some(n);
                true
            }
            None => false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// The single value of a one-element node.
    pub fn item(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor {
            shape: n.shape.clone(),
            data: n.value.clone(),
        }
    }

    /// Which side of every kink the forward pass took. Two passes with equal
    /// signatures lie in the same smooth piece.
    pub fn branch_signature(&self) -> &[i32] {
        &self.branches
    }

    /// Records a data-dependent branch taken outside the primitives.
    pub fn note_branch(&mut self, taken: impl IntoIterator<Item = bool>) {
        self.branches.extend(taken.into_iter().map(i32::from));
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op) -> Var {
        self.nodes.push(Node { shape, value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t.shape, t.data, Op::Leaf)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.constant(Tensor::scalar(v))
    }

    pub fn vector(&mut self, v: Vec<f64>) -> Var {
        self.constant(Tensor::vector(v))
    }

    /// Whole parameter tensor, recorded once per tape. A tape caches by id,
    /// so it must only ever see one store.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let t = store.get(id);
        let v = self.push(t.shape.clone(), t.data.clone(), Op::Param(id));
        self.params.insert(id, v);
        v
    }

    /// Row `row` of a matrix parameter as a vector.
    pub fn param_row(&mut self, store: &ParamStore, id: ParamId, row: usize) -> Var {
        if let Some(&v) = self.rows.get(&(id, row)) {
            return v;
        }
        let t = store.get(id);
        let v = self.push(
            vec![t.shape[1]],
            t.row(row).to_vec(),
            Op::ParamRow {
                id,
                row,
                rows: t.shape[0],
            },
        );
        self.rows.insert((id, row), v);
        v
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let n = &self.nodes[a.0];
        let value = n.value.iter().map(|&x| f(x)).collect();
        let shape = n.shape.clone();
        self.push(shape, value, op)
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, AutodiffError> {
        let (na, nb) = (&self.nodes[a.0], &self.nodes[b.0]);
        let shape = if na.shape == nb.shape || nb.value.len() == 1 {
            na.shape.clone()
        } else if na.value.len() == 1 {
            nb.shape.clone()
        } else {
            return mismatch(name, &na.shape, &nb.shape);
        };
        let len: usize = shape.iter().product();
        let (la, lb) = (na.value.len(), nb.value.len());
        let value = (0..len)
            .map(|i| f(na.value[if la == 1 { 0 } else { i }], nb.value[if lb == 1 { 0 } else { i }]))
            .collect();
        Ok(self.push(shape, value, op))
    }

    /// Elementwise sum; a one-element operand broadcasts.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        if let Some(&y) = self.value(b).iter().find(|&&y| y == 0.0) {
            return Err(AutodiffError::Domain { op: "div", value: y });
        }
        self.binary(a, b, "div", |x, y| x / y, Op::Div(a, b))
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let v = self.binary(a, b, "minimum", f64::min, Op::Minimum(a, b))?;
        self.note_ties(a, b);
        Ok(v)
    }

    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let v = self.binary(a, b, "maximum", f64::max, Op::Maximum(a, b))?;
        self.note_ties(a, b);
        Ok(v)
    }

    fn note_ties(&mut self, a: Var, b: Var) {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let len = va.len().max(vb.len());
        let sig: Vec<i32> = (0..len)
            .map(|i| {
                let x = va[if va.len() == 1 { 0 } else { i }];
                let y = vb[if vb.len() == 1 { 0 } else { i }];
                sign_class(x - y)
            })
            .collect();
        self.branches.extend(sig);
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(a, |x| -x, Op::Neg(a))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| c * x, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| x + c, Op::AddScalar(a))
    }

    /// `m` is `[rows, cols]`, `v` is `[cols]`.
    pub fn matvec(&mut self, m: Var, v: Var) -> Result<Var, AutodiffError> {
        let (nm, nv) = (&self.nodes[m.0], &self.nodes[v.0]);
        if nm.shape.len() != 2 || nv.shape.len() != 1 || nm.shape[1] != nv.shape[0] {
            return mismatch("matvec", &nm.shape, &nv.shape);
        }
        let (rows, cols) = (nm.shape[0], nm.shape[1]);
        let value = (0..rows)
            .map(|i| {
                nm.value[i * cols..(i + 1) * cols]
                    .iter()
                    .zip(&nv.value)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();
        Ok(self.push(vec![rows], value, Op::MatVec(m, v)))
    }

    /// Joins vectors (and scalars) end to end.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let mut value = Vec::new();
        for &p in parts {
            let n = &self.nodes[p.0];
            if n.shape.len() > 1 {
                return mismatch("concat", &n.shape, &[]);
            }
            value.extend_from_slice(&n.value);
        }
        Ok(self.push(vec![value.len()], value, Op::Concat(parts.to_vec())))
    }

    /// Stacks `k` equal-length vectors into a `[k, d]` matrix.
    pub fn stack(&mut self, rows: &[Var]) -> Result<Var, AutodiffError> {
        let first = match rows.first() {
            Some(&r) => self.nodes[r.0].shape.clone(),
            None => return mismatch("stack", &[], &[]),
        };
        if first.len() != 1 {
            return mismatch("stack", &first, &[]);
        }
        let mut value = Vec::with_capacity(rows.len() * first[0]);
        for &r in rows {
            let n = &self.nodes[r.0];
            if n.shape != first {
                return mismatch("stack", &first, &n.shape);
            }
            value.extend_from_slice(&n.value);
        }
        Ok(self.push(vec![rows.len(), first[0]], value, Op::Stack(rows.to_vec())))
    }

    /// `a[start..start + len]` of a vector.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var, AutodiffError> {
        let n = &self.nodes[a.0];
        if n.shape.len() != 1 || start + len > n.shape[0] {
            return mismatch("slice", &n.shape, &[start, len]);
        }
        let value = n.value[start..start + len].to_vec();
        Ok(self.push(vec![len], value, Op::Slice(a, start)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.iter().sum();
        self.push(vec![], vec![s], Op::Sum(a))
    }

    fn matrix_dims(&self, a: Var, op: &'static str) -> Result<(usize, usize), AutodiffError> {
        let s = &self.nodes[a.0].shape;
        if s.len() != 2 {
            return mismatch(op, s, &[]);
        }
        Ok((s[0], s[1]))
    }

    /// Column sums of a `[k, d]` matrix.
    pub fn sum_axis0(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let (k, d) = self.matrix_dims(a, "sum_axis0")?;
        let v = &self.nodes[a.0].value;
        let value = (0..d).map(|j| (0..k).map(|i| v[i * d + j]).sum()).collect();
        Ok(self.push(vec![d], value, Op::SumAxis0(a)))
    }

    /// Column minima of a `[k, d]` matrix.
    pub fn min_axis0(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let (k, d) = self.matrix_dims(a, "min_axis0")?;
        let v = &self.nodes[a.0].value;
        let mut value = Vec::with_capacity(d);
        let mut sig = Vec::with_capacity(d);
        for j in 0..d {
            let (arg, m) = argmin_col(v, k, d, j);
            let tied = (0..k).any(|i| i != arg && v[i * d + j] == m);
            value.push(m);
            sig.push(if tied { -1 } else { arg as i32 });
        }
        self.branches.extend(sig);
        Ok(self.push(vec![d], value, Op::MinAxis0(a)))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let sig: Vec<i32> = self.nodes[a.0].value.iter().map(|&x| sign_class(x)).collect();
        self.branches.extend(sig);
        self.unary(a, f64::abs, Op::Abs(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let sig: Vec<i32> = self.nodes[a.0].value.iter().map(|&x| sign_class(x)).collect();
        self.branches.extend(sig);
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    /// `(1/beta) ln(1 + exp(beta x))`.
    pub fn softplus(&mut self, a: Var, beta: f64) -> Var {
        self.unary(a, |x| softplus(x, beta), Op::Softplus(a, beta))
    }

    fn check_domain(&self, a: Var, op: &'static str, ok: impl Fn(f64) -> bool) -> Result<(), AutodiffError> {
        match self.nodes[a.0].value.iter().find(|&&x| !ok(x)) {
            Some(&value) => Err(AutodiffError::Domain { op, value }),
            None => Ok(()),
        }
    }

    pub fn log(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.check_domain(a, "log", |x| x > 0.0)?;
        Ok(self.unary(a, f64::ln, Op::Log(a)))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn sin(&mut self, a: Var) -> Var {
        self.unary(a, f64::sin, Op::Sin(a))
    }

    pub fn cos(&mut self, a: Var) -> Var {
        self.unary(a, f64::cos, Op::Cos(a))
    }

    /// Elementwise `atan2(y, x)`; both operands must have the same shape.
    pub fn atan2(&mut self, y: Var, x: Var) -> Result<Var, AutodiffError> {
        if self.nodes[y.0].shape != self.nodes[x.0].shape {
            return mismatch("atan2", &self.nodes[y.0].shape, &self.nodes[x.0].shape);
        }
        // the branch cut sits on the negative x axis
        let sig: Vec<i32> = self.nodes[y.0]
            .value
            .iter()
            .zip(&self.nodes[x.0].value)
            .map(|(&yy, &xx)| if xx < 0.0 { sign_class(yy) } else { 2 })
            .collect();
        self.branches.extend(sig);
        self.binary(y, x, "atan2", f64::atan2, Op::Atan2(y, x))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let sig: Vec<i32> = self.nodes[a.0]
            .value
            .iter()
            .map(|&x| match x {
                _ if x < lo => -2,
                _ if x == lo => -1,
                _ if x == hi => 1,
                _ if x > hi => 2,
                _ => 0,
            })
            .collect();
        self.branches.extend(sig);
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    /// Max-stabilised softmax. For a vector `axis` must be 0; for a `[k, d]`
    /// matrix, axis 0 normalises each column and axis 1 each row.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var, AutodiffError> {
        let n = &self.nodes[a.0];
        let (groups, stride, count) = softmax_layout(&n.shape, axis)?;
        let mut value = vec![0.0; n.value.len()];
        for g in groups {
            let idx = |i: usize| g + i * stride;
            let m = (0..count).map(|i| n.value[idx(i)]).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for i in 0..count {
                let e = (n.value[idx(i)] - m).exp();
                value[idx(i)] = e;
                z += e;
            }
            for i in 0..count {
                value[idx(i)] /= z;
            }
        }
        let shape = n.shape.clone();
        Ok(self.push(shape, value, Op::Softmax(a, axis)))
    }

    pub fn digamma(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let value = self.nodes[a.0]
            .value
            .iter()
            .map(|&x| special::digamma(x))
            .collect::<Result<_, _>>()?;
        let shape = self.nodes[a.0].shape.clone();
        Ok(self.push(shape, value, Op::Digamma(a)))
    }

    pub fn lgamma(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let value = self.nodes[a.0]
            .value
            .iter()
            .map(|&x| special::lgamma(x))
            .collect::<Result<_, _>>()?;
        let shape = self.nodes[a.0].shape.clone();
        Ok(self.push(shape, value, Op::Lgamma(a)))
    }

    /// `1/x`; applied to a reciprocal it returns the original node, so
    /// double reciprocals are exact.
    pub fn recip(&mut self, a: Var) -> Result<Var, AutodiffError> {
        if let Op::Recip(inner) = self.nodes[a.0].op {
            return Ok(inner);
        }
        self.check_domain(a, "recip", |x| x != 0.0)?;
        Ok(self.unary(a, |x| 1.0 / x, Op::Recip(a)))
    }

    /// Wraps angles into `[-pi, pi)` with an identity gradient.
    pub fn wrap(&mut self, a: Var) -> Var {
        let sig: Vec<i32> = self.nodes[a.0]
            .value
            .iter()
            .map(|&x| ((x + PI) / (2.0 * PI)).floor() as i32)
            .collect();
        self.branches.extend(sig);
        self.unary(a, wrap_angle, Op::Wrap(a))
    }

    /// Reverse sweep from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, AutodiffError> {
        if self.nodes[loss.0].value.len() != 1 {
            return mismatch("backward", &self.nodes[loss.0].shape, &[]);
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients::default();
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let f = if self.fault == Some(node.op.name()) { 1.5 } else { 1.0 };
            let acc = |v: Var, grads: &mut Vec<Option<Vec<f64>>>, i: usize, x: f64| {
                let len = self.nodes[v.0].value.len();
                let slot = grads[v.0].get_or_insert_with(|| vec![0.0; len]);
                slot[if len == 1 { 0 } else { i }] += f * x;
            };
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => {
                    let slot = out.slot(*id, &node.shape);
                    for (s, x) in slot.iter_mut().zip(&g) {
                        *s += x;
                    }
                }
                Op::ParamRow { id, row, rows } => {
                    let cols = node.shape[0];
                    let slot = out.slot(*id, &[*rows, cols]);
                    for (s, x) in slot[row * cols..(row + 1) * cols].iter_mut().zip(&g) {
                        *s += x;
                    }
                }
                Op::Add(a, b) => {
                    for (i, &gi) in g.iter().enumerate() {
                        acc(*a, &mut grads, i, gi);
                        acc(*b, &mut grads, i, gi);
                    }
                }
                Op::Sub(a, b) => {
                    for (i, &gi) in g.iter().enumerate() {
                        acc(*a, &mut grads, i, gi);
                        acc(*b, &mut grads, i, -gi);
                    }
                }
                Op::Mul(a, b) | Op::Div(a, b) => {
                    let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let is_div = matches!(node.op, Op::Div(..));
                    for (i, &gi) in g.iter().enumerate() {
                        let x = va[if va.len() == 1 { 0 } else { i }];
                        let y = vb[if vb.len() == 1 { 0 } else { i }];
                        if is_div {
                            acc(*a, &mut grads, i, gi / y);
                            acc(*b, &mut grads, i, -gi * x / (y * y));
                        } else {
                            acc(*a, &mut grads, i, gi * y);
                            acc(*b, &mut grads, i, gi * x);
                        }
                    }
                }
                Op::Minimum(a, b) | Op::Maximum(a, b) => {
                    let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let is_min = matches!(node.op, Op::Minimum(..));
                    for (i, &gi) in g.iter().enumerate() {
                        let x = va[if va.len() == 1 { 0 } else { i }];
                        let y = vb[if vb.len() == 1 { 0 } else { i }];
                        let first = if is_min { x <= y } else { x >= y };
                        if first {
                            acc(*a, &mut grads, i, gi);
                        } else {
                            acc(*b, &mut grads, i, gi);
                        }
                    }
                }
                Op::Neg(a) => each(&g, |i, gi| acc(*a, &mut grads, i, -gi)),
                Op::Scale(a, c) => each(&g, |i, gi| acc(*a, &mut grads, i, c * gi)),
                Op::AddScalar(a) => each(&g, |i, gi| acc(*a, &mut grads, i, gi)),
                Op::MatVec(m, v) => {
                    // the hot path of every network, so done row-wise
                    let (vm, vv) = (&self.nodes[m.0].value, &self.nodes[v.0].value);
                    let cols = vv.len();
                    let gm = grads[m.0].get_or_insert_with(|| vec![0.0; vm.len()]);
                    for (i, &gi) in g.iter().enumerate() {
                        let gi = f * gi;
                        for (s, &x) in gm[i * cols..(i + 1) * cols].iter_mut().zip(vv) {
                            *s += gi * x;
                        }
                    }
                    let gv = grads[v.0].get_or_insert_with(|| vec![0.0; cols]);
                    for (i, &gi) in g.iter().enumerate() {
                        let gi = f * gi;
                        for (s, &x) in gv.iter_mut().zip(&vm[i * cols..(i + 1) * cols]) {
                            *s += gi * x;
                        }
                    }
                }
                Op::Concat(parts) | Op::Stack(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let len = self.nodes[p.0].value.len();
                        for i in 0..len {
                            acc(*p, &mut grads, i, g[off + i]);
                        }
                        off += len;
                    }
                }
                Op::Slice(a, start) => each(&g, |i, gi| acc(*a, &mut grads, start + i, gi)),
                Op::Sum(a) => {
                    let len = self.nodes[a.0].value.len();
                    for i in 0..len {
                        acc(*a, &mut grads, i, g[0]);
                    }
                }
                Op::SumAxis0(a) => {
                    let k = self.nodes[a.0].shape[0];
                    let d = g.len();
                    for i in 0..k {
                        for j in 0..d {
                            acc(*a, &mut grads, i * d + j, g[j]);
                        }
                    }
                }
                Op::MinAxis0(a) => {
                    let v = &self.nodes[a.0].value;
                    let k = self.nodes[a.0].shape[0];
                    let d = g.len();
                    for j in 0..d {
                        let (arg, _) = argmin_col(v, k, d, j);
                        acc(*a, &mut grads, arg * d + j, g[j]);
                    }
                }
                Op::Abs(a) => {
                    let v = &self.nodes[a.0].value;
                    each(&g, |i, gi| acc(*a, &mut grads, i, if v[i] > 0.0 { gi } else { -gi }))
                }
                Op::Relu(a) => {
                    let v = &self.nodes[a.0].value;
                    each(&g, |i, gi| acc(*a, &mut grads, i, if v[i] > 0.0 { gi } else { 0.0 }))
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    each(&g, |i, gi| acc(*a, &mut grads, i, gi * y[i] * (1.0 - y[i])))
                }
                Op::Softplus(a, beta) => {
                    let v = &self.nodes[a.0].value;
                    each(&g, |i, gi| acc(*a, &mut grads, i, gi * sigmoid(beta * v[i])))
                }
                Op::Log(a) => {
                    let v = &self.nodes[a.0].value;
                    each(&g, |i, gi| acc(*a, &mut grads, i, gi / v[i]))
                }
                Op::Exp(a) => {
                    let y = &node.value;
                    each(&g, |i, gi| acc(*a, &mut grads, i, gi * y[i]))
                }
                Op::Sin(a) => {
                    let v = &self.nodes[a.0].value;
                    each(&g, |i, gi| acc(*a, &mut grads, i, gi * v[i].cos()))
                }
                Op::Cos(a) => {
                    let v = &self.nodes[a.0].value;
                    each(&g, |i, gi| acc(*a, &mut grads, i, -gi * v[i].sin()))
                }
                Op::Atan2(y, x) => {
                    let (vy, vx) = (&self.nodes[y.0].value, &self.nodes[x.0].value);
                    for (i, &gi) in g.iter().enumerate() {
                        let r2 = vx[i] * vx[i] + vy[i] * vy[i];
                        acc(*y, &mut grads, i, gi * vx[i] / r2);
                        acc(*x, &mut grads, i, -gi * vy[i] / r2);
                    }
                }
                Op::Clamp(a, lo, hi) => {
                    let v = &self.nodes[a.0].value;
                    each(&g, |i, gi| {
                        let inside = v[i] >= *lo && v[i] <= *hi;
                        acc(*a, &mut grads, i, if inside { gi } else { 0.0 })
                    })
                }
                Op::Softmax(a, axis) => {
                    let y = &node.value;
                    let (groups, stride, count) = softmax_layout(&node.shape, *axis)?;
                    for grp in groups {
                        let idx = |i: usize| grp + i * stride;
                        let dot: f64 = (0..count).map(|i| g[idx(i)] * y[idx(i)]).sum();
                        for i in 0..count {
                            let k = idx(i);
                            acc(*a, &mut grads, k, y[k] * (g[k] - dot));
                        }
                    }
                }
                Op::Digamma(a) => {
                    let v = &self.nodes[a.0].value;
                    for (i, &gi) in g.iter().enumerate() {
                        acc(*a, &mut grads, i, gi * special::trigamma(v[i])?);
                    }
                }
                Op::Lgamma(a) => {
                    let v = &self.nodes[a.0].value;
                    for (i, &gi) in g.iter().enumerate() {
                        acc(*a, &mut grads, i, gi * special::digamma(v[i])?);
                    }
                }
                Op::Recip(a) => {
                    let y = &node.value;
                    each(&g, |i, gi| acc(*a, &mut grads, i, -gi * y[i] * y[i]))
                }
                Op::Wrap(a) => each(&g, |i, gi| acc(*a, &mut grads, i, gi)),
            }
        }
        Ok(out)
    }
}

fn each(g: &[f64], mut f: impl FnMut(usize, f64)) {
    for (i, &gi) in g.iter().enumerate() {
        f(i, gi);
    }
}

fn argmin_col(v: &[f64], k: usize, d: usize, j: usize) -> (usize, f64) {
    let mut arg = 0;
    for i in 1..k {
        if v[i * d + j] < v[arg * d + j] {
            arg = i;
        }
    }
    (arg, v[arg * d + j])
}

/// Group start offsets, stride between members, and group size.
fn softmax_layout(shape: &[usize], axis: usize) -> Result<(Vec<usize>, usize, usize), AutodiffError> {
    match (shape.len(), axis) {
        (1, 0) => Ok((vec![0], 1, shape[0])),
        (2, 0) => Ok(((0..shape[1]).collect(), shape[1], shape[0])),
        (2, 1) => Ok(((0..shape[0]).map(|i| i * shape[1]).collect(), 1, shape[1])),
        _ => mismatch("softmax", shape, &[axis]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn primitive_values() {
        let mut t = Tape::new();
        let z = t.scalar(0.0);
        let s = t.sigmoid(z);
        assert_eq!(t.item(s), 0.5);
        let sp = t.softplus(z, 1.0);
        assert!(close(t.item(sp), 2f64.ln(), 1e-15));
        let a = t.vector(vec![1.0, 5.0]);
        let b = t.vector(vec![3.0, 2.0]);
        let m = t.minimum(a, b).unwrap();
        assert_eq!(t.value(m), &[1.0, 2.0]);
        let w = t.vector(vec![PI, -PI, 3.0 * PI + 0.5]);
        let w = t.wrap(w);
        assert!(close(t.value(w)[0], -PI, 1e-12));
        assert!(close(t.value(w)[1], -PI, 1e-12));
        assert!(close(t.value(w)[2], -PI + 0.5, 1e-12));
    }

    #[test]
    fn square_and_sigmoid_gradients() {
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::scalar(3.0));
        let mut t = Tape::new();
        let v = t.param(&store, x);
        let sq = t.mul(v, v).unwrap();
        assert_eq!(t.backward(sq).unwrap().get(x).unwrap().data(), &[6.0]);

        store.get_mut(x).data_mut()[0] = 0.0;
        let mut t = Tape::new();
        let v = t.param(&store, x);
        let s = t.sigmoid(v);
        assert_eq!(t.backward(s).unwrap().get(x).unwrap().data(), &[0.25]);
    }

    #[test]
    fn shape_errors() {
        let mut t = Tape::new();
        let a = t.vector(vec![1.0, 2.0]);
        let b = t.vector(vec![1.0, 2.0, 3.0]);
        assert!(matches!(t.add(a, b), Err(AutodiffError::ShapeMismatch { .. })));
        assert!(t.matvec(a, b).is_err());
        let nonscalar = t.add(a, a).unwrap();
        assert!(t.backward(nonscalar).is_err());
        let z = t.scalar(0.0);
        assert!(matches!(t.log(z), Err(AutodiffError::Domain { .. })));
        assert!(t.digamma(z).is_err());
    }

    #[test]
    fn kink_conventions() {
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::vector(vec![0.0, 2.0]));
        let y = store.add("y", Tensor::vector(vec![1.0, 2.0]));
        let mut t = Tape::new();
        let (vx, vy) = (t.param(&store, x), t.param(&store, y));
        let a = t.abs(vx);
        let r = t.relu(vx);
        let m = t.minimum(vx, vy).unwrap();
        let s1 = t.add(a, r).unwrap();
        let s2 = t.add(s1, m).unwrap();
        let loss = t.sum(s2);
        let g = t.backward(loss).unwrap();
        // abs'(0) = -1, relu'(0) = 0, min tie at index 1 goes to x
        assert_eq!(g.get(x).unwrap().data(), &[-1.0 + 0.0 + 1.0, 1.0 + 1.0 + 1.0]);
        assert!(g.get(y).is_none());
    }

    #[test]
    fn diamond_fan_out_accumulates() {
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::scalar(0.7));
        let mut t = Tape::new();
        let v = t.param(&store, x);
        let a = t.sin(v);
        let b = t.exp(v);
        let top = t.mul(a, b).unwrap();
        let g = t.backward(top).unwrap().get(x).unwrap().data()[0];
        let expected = 0.7f64.cos() * 0.7f64.exp() + 0.7f64.sin() * 0.7f64.exp();
        assert!(close(g, expected, 1e-14));
    }

    #[test]
    fn softmax_axes() {
        let mut t = Tape::new();
        let m = t
            .constant(Tensor::new(vec![2, 2], vec![0.0, 1.0, 0.0, 3.0]).unwrap());
        let c = t.softmax(m, 0).unwrap();
        assert!(close(t.value(c)[0], 0.5, 1e-15));
        assert!(close(t.value(c)[1] + t.value(c)[3], 1.0, 1e-15));
        let r = t.softmax(m, 1).unwrap();
        assert!(close(t.value(r)[0] + t.value(r)[1], 1.0, 1e-15));
        let big = t.vector(vec![1000.0, 1000.0]);
        let s = t.softmax(big, 0).unwrap();
        assert_eq!(t.value(s), &[0.5, 0.5]);
    }

    #[test]
    fn param_rows_scatter_into_dense_gradient() {
        let mut store = ParamStore::new();
        let e = store.add("e", Tensor::new(vec![3, 2], vec![1.0; 6]).unwrap());
        let mut t = Tape::new();
        let r0 = t.param_row(&store, e, 2);
        let r1 = t.param_row(&store, e, 2);
        assert_eq!(r0, r1);
        let s = t.sum(r0);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(e).unwrap().data(), &[0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
    }
}
