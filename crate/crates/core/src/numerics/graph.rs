//! Reverse-mode automatic differentiation over a recorded tape.
//!
//! A [`Graph`] borrows a [`ParamStore`] immutably for the duration of one
//! forward pass. Each operation appends a node; node order is a valid
//! topological order, so [`Graph::backward`] walks the tape once in reverse.
//! Parameter gradients come back as a [`Grads`] table that the optimizer
//! applies to the store afterwards.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::rng::Rng;
use super::tensor::{matmul_acc, matmul_nt_acc, matmul_tn_acc, Float, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, ordered collection of trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T = f32> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
}

impl<T> Default for ParamStore<T> {
    fn default() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
            index: HashMap::new(),
        }
    }
}

impl<T: Float> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// The same parameters converted to another float type.
    pub fn cast<U: Float>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::usage(format!("duplicate parameter name {name}")));
        }
        let id = self.values.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(self.values.iter())
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::numel).sum()
    }

    /// Replaces every tensor with the same-named tensor from `tensors`,
    /// requiring an exact name and shape match.
    pub fn load_from<'a>(&mut self, tensors: impl IntoIterator<Item = (&'a str, &'a Tensor<T>)>) -> Result<()> {
        let mut seen = vec![false; self.values.len()];
        for (name, t) in tensors {
            let id = *self
                .index
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("unexpected tensor {name}")))?;
            if self.values[id].shape() != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name}: shape {:?} does not match {:?}",
                    t.shape(),
                    self.values[id].shape()
                )));
            }
            self.values[id] = t.clone();
            seen[id] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Checkpoint(format!("missing tensor {}", self.names[missing])));
        }
        Ok(())
    }
}

/// Per-parameter gradients indexed by [`ParamId`].
#[derive(Debug, Clone)]
pub struct Grads<T = f32>(Vec<Option<Tensor<T>>>);

impl<T: Float> Grads<T> {
    pub fn empty(n: usize) -> Self {
        Grads(vec![None; n])
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.0.get(id.0).and_then(Option::as_ref)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor<T>)> {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|g| (ParamId(i), g)))
    }

    pub(crate) fn slots_mut(&mut self) -> &mut [Option<Tensor<T>>] {
        &mut self.0
    }

    /// Global L2 norm over every present gradient.
    pub fn global_norm(&self) -> f64 {
        self.0.iter().flatten().map(Tensor::sq_norm).sum::<f64>().sqrt()
    }

    /// Adds `other` into `self` slot by slot.
    pub fn accumulate(&mut self, other: &Grads<T>) {
        for (mine, theirs) in self.0.iter_mut().zip(&other.0) {
            match (mine.as_mut(), theirs) {
                (Some(m), Some(t)) => m.add_assign(t),
                (None, Some(t)) => *mine = Some(t.clone()),
                _ => {}
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Param(ParamId),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, T),
    MatMul(Var, Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Gather(Var, Vec<usize>),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Log(Var),
    Sum(Var),
    Mean(Var),
    MaxBlocks(Var, Vec<usize>),
    Pick(Var, Vec<usize>),
    TileAdd(Var, Var),
    BlockDot(Var, Var),
    BlockWeightedSum(Var, Var),
    Dropout(Var, Vec<T>),
}

#[derive(Debug)]
struct Node<T> {
    value: Option<Tensor<T>>,
    op: Op<T>,
    needs_grad: bool,
}

/// Gradients of every node reached by a backward pass.
#[derive(Debug)]
pub struct Gradients<T = f32> {
    nodes: Vec<Option<Tensor<T>>>,
    params: Grads<T>,
}

impl<T: Float> Gradients<T> {
    pub fn node(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].as_ref()
    }

    pub fn params(&self) -> &Grads<T> {
        &self.params
    }

    pub fn into_params(self) -> Grads<T> {
        self.params
    }
}

pub struct Graph<'p, T = f32> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
    param_vars: HashMap<ParamId, Var>,
}

fn check_finite<T: Float>(op: &'static str, t: &Tensor<T>) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { op })
    }
}

fn shape_err<T: Float>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Error {
    Error::Shape {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn sigmoid<T: Float>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn softmax_row<T: Float>(x: &[T], out: &mut [T]) {
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

fn log_softmax_row<T: Float>(x: &[T], out: &mut [T]) {
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let total: T = x.iter().map(|&v| (v - max).exp()).sum();
    let lse = max + total.ln();
    for (o, &v) in out.iter_mut().zip(x) {
        *o = v - lse;
    }
}

/// Row-wise numerically stable softmax of a plain tensor.
pub fn softmax<T: Float>(x: &Tensor<T>) -> Tensor<T> {
    let mut out = Tensor::zeros(x.shape());
    let c = x.cols();
    for r in 0..x.rows() {
        softmax_row(x.row_slice(r), &mut out.data_mut()[r * c..(r + 1) * c]);
    }
    out
}

/// Row-wise log-softmax of a plain tensor via log-sum-exp.
pub fn log_softmax<T: Float>(x: &Tensor<T>) -> Tensor<T> {
    let mut out = Tensor::zeros(x.shape());
    let c = x.cols();
    for r in 0..x.rows() {
        log_softmax_row(x.row_slice(r), &mut out.data_mut()[r * c..(r + 1) * c]);
    }
    out
}

impl<'p, T: Float> Graph<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        let node = &self.nodes[v.0];
        match (&node.op, &node.value) {
            (Op::Param(id), _) => self.params.get(*id),
            (_, Some(t)) => t,
            (_, None) => unreachable!("node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, op: &'static str, value: Tensor<T>, node_op: Op<T>, parents: &[Var]) -> Result<Var> {
        check_finite(op, &value)?;
        let needs_grad = parents.iter().any(|&p| self.needs(p));
        self.nodes.push(Node {
            value: Some(value),
            op: node_op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A leaf that never receives gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Result<Var> {
        self.leaf(value, false)
    }

    /// A leaf input; with `requires_grad` its gradient is available from
    /// [`Gradients::node`].
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Result<Var> {
        check_finite("leaf", &value)?;
        self.nodes.push(Node {
            value: Some(value),
            op: Op::Leaf,
            needs_grad: requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// The node for a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            needs_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    fn binary_same(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !ta.same_shape(tb) {
            return Err(shape_err(name, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary_same("add", a, b, |x, y| x + y)?;
        self.push("add", out, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary_same("sub", a, b, |x, y| x - y)?;
        self.push("sub", out, Op::Sub(a, b), &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary_same("mul", a, b, |x, y| x * y)?;
        self.push("mul", out, Op::Mul(a, b), &[a, b])
    }

    /// `a[m,n] + row[1,n]` broadcast over rows.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ta, tr) = (self.value(a), self.value(row));
        if tr.rows() != 1 || tr.cols() != ta.cols() {
            return Err(shape_err("add_row", ta, tr));
        }
        let n = ta.cols();
        let mut out = ta.clone();
        for r in 0..ta.rows() {
            for (o, &b) in out.data_mut()[r * n..(r + 1) * n].iter_mut().zip(tr.data()) {
                *o += b;
            }
        }
        self.push("add_row", out, Op::AddRow(a, row), &[a, row])
    }

    /// `a[m,n] * col[m,1]` broadcast over columns.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (ta, tc) = (self.value(a), self.value(col));
        if tc.cols() != 1 || tc.rows() != ta.rows() {
            return Err(shape_err("mul_col", ta, tc));
        }
        let n = ta.cols();
        let mut out = ta.clone();
        for r in 0..ta.rows() {
            let s = tc.data()[r];
            for o in &mut out.data_mut()[r * n..(r + 1) * n] {
                *o *= s;
            }
        }
        self.push("mul_col", out, Op::MulCol(a, col), &[a, col])
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Result<Var> {
        let mut out = self.value(a).clone();
        out.scale_in_place(factor);
        self.push("scale", out, Op::Scale(a, factor), &[a])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        if tb.rows() != k {
            return Err(shape_err("matmul", ta, tb));
        }
        let mut out = Tensor::zeros(&[m, n]);
        matmul_acc(ta.data(), tb.data(), out.data_mut(), m, k, n);
        self.push("matmul", out, Op::MatMul(a, b), &[a, b])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::usage("concat_cols of nothing"))?;
        let m = self.value(first).rows();
        let mut total = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows() != m {
                return Err(shape_err("concat_cols", self.value(first), t));
            }
            total += t.cols();
        }
        let mut data = Vec::with_capacity(m * total);
        for r in 0..m {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let out = Tensor::new(vec![m, total], data)?;
        self.push("concat_cols", out, Op::ConcatCols(parts.to_vec()), parts)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::usage("concat_rows of nothing"))?;
        let n = self.value(first).cols();
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.cols() != n {
                return Err(shape_err("concat_rows", self.value(first), t));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let out = Tensor::new(vec![rows, n], data)?;
        self.push("concat_rows", out, Op::ConcatRows(parts.to_vec()), parts)
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let ta = self.value(a);
        if start >= end || end > ta.cols() {
            return Err(Error::Shape {
                op: "slice_cols",
                lhs: ta.shape().to_vec(),
                rhs: vec![start, end],
            });
        }
        let m = ta.rows();
        let mut data = Vec::with_capacity(m * (end - start));
        for r in 0..m {
            data.extend_from_slice(&ta.row_slice(r)[start..end]);
        }
        let out = Tensor::new(vec![m, end - start], data)?;
        self.push("slice_cols", out, Op::SliceCols(a, start), &[a])
    }

    /// Rows `start..end` of a matrix.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let ta = self.value(a);
        if start >= end || end > ta.rows() {
            return Err(Error::Shape {
                op: "slice_rows",
                lhs: ta.shape().to_vec(),
                rhs: vec![start, end],
            });
        }
        let n = ta.cols();
        let out = Tensor::new(vec![end - start, n], ta.data()[start * n..end * n].to_vec())?;
        self.push("slice_rows", out, Op::SliceRows(a, start), &[a])
    }

    /// Embedding lookup: rows `ids` of `table`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        if ids.is_empty() {
            return Err(Error::usage("gather with no ids"));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= t.rows()) {
            return Err(Error::Shape {
                op: "gather",
                lhs: t.shape().to_vec(),
                rhs: vec![bad],
            });
        }
        let mut data = Vec::with_capacity(ids.len() * t.cols());
        for &i in ids {
            data.extend_from_slice(t.row_slice(i));
        }
        let out = Tensor::new(vec![ids.len(), t.cols()], data)?;
        self.push("gather", out, Op::Gather(table, ids.to_vec()), &[table])
    }

    fn unary(&mut self, name: &'static str, a: Var, op: Op<T>, f: impl Fn(T) -> T) -> Result<Var> {
        let ta = self.value(a);
        let data = ta.data().iter().map(|&x| f(x)).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(name, out, op, &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary("tanh", a, Op::Tanh(a), T::tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary("sigmoid", a, Op::Sigmoid(a), sigmoid)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary("relu", a, Op::Relu(a), |x| x.max(T::zero()))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary("log", a, Op::Log(a), T::ln)
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let out = softmax(self.value(a));
        self.push("softmax", out, Op::Softmax(a), &[a])
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let out = log_softmax(self.value(a));
        self.push("log_softmax", out, Op::LogSoftmax(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s: T = self.value(a).data().iter().copied().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let s: T = t.data().iter().copied().sum::<T>() / T::of(t.numel() as f64);
        self.push("mean", Tensor::scalar(s), Op::Mean(a), &[a])
    }

    /// Views `a` as `blocks` stacked `[m, n]` matrices and takes the
    /// elementwise maximum across them. Ties resolve to the lowest block.
    pub fn max_blocks(&mut self, a: Var, blocks: usize) -> Result<Var> {
        let ta = self.value(a);
        if blocks == 0 || !ta.rows().is_multiple_of(blocks) {
            return Err(Error::Shape {
                op: "max_blocks",
                lhs: ta.shape().to_vec(),
                rhs: vec![blocks],
            });
        }
        let m = ta.rows() / blocks;
        let n = ta.cols();
        let mut out = vec![T::neg_infinity(); m * n];
        let mut arg = vec![0usize; m * n];
        for b in 0..blocks {
            for r in 0..m {
                let src = ta.row_slice(b * m + r);
                for c in 0..n {
                    if src[c] > out[r * n + c] {
                        out[r * n + c] = src[c];
                        arg[r * n + c] = b;
                    }
                }
            }
        }
        let out = Tensor::new(vec![m, n], out)?;
        self.push("max_blocks", out, Op::MaxBlocks(a, arg), &[a])
    }

    /// Maximum down each column: `[m, n] -> [1, n]`.
    pub fn max_axis0(&mut self, a: Var) -> Result<Var> {
        let rows = self.value(a).rows();
        self.max_blocks(a, rows)
    }

    /// `out[r] = a[r, cols[r]]` as an `[m, 1]` column.
    pub fn pick(&mut self, a: Var, cols: &[usize]) -> Result<Var> {
        let ta = self.value(a);
        if cols.len() != ta.rows() || cols.iter().any(|&c| c >= ta.cols()) {
            return Err(Error::Shape {
                op: "pick",
                lhs: ta.shape().to_vec(),
                rhs: vec![cols.len()],
            });
        }
        let data = cols.iter().enumerate().map(|(r, &c)| ta.at(r, c)).collect();
        let out = Tensor::new(vec![cols.len(), 1], data)?;
        self.push("pick", out, Op::Pick(a, cols.to_vec()), &[a])
    }

    /// `a[m, t*k] + b[m, k]` with `b` repeated across the `t` blocks.
    pub fn tile_add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let k = tb.cols();
        if ta.rows() != tb.rows() || ta.cols() % k != 0 {
            return Err(shape_err("tile_add", ta, tb));
        }
        let n = ta.cols();
        let mut out = ta.clone();
        for r in 0..ta.rows() {
            let brow = tb.row_slice(r);
            for (j, o) in out.data_mut()[r * n..(r + 1) * n].iter_mut().enumerate() {
                *o += brow[j % k];
            }
        }
        self.push("tile_add", out, Op::TileAdd(a, b), &[a, b])
    }

    /// `out[r, s] = dot(a[r, s*k..(s+1)*k], v)` for `a[m, t*k]`, `v[1, k]`.
    pub fn block_dot(&mut self, a: Var, v: Var) -> Result<Var> {
        let (ta, tv) = (self.value(a), self.value(v));
        let k = tv.numel();
        if ta.cols() % k != 0 {
            return Err(shape_err("block_dot", ta, tv));
        }
        let t = ta.cols() / k;
        let m = ta.rows();
        let mut out = vec![T::zero(); m * t];
        for r in 0..m {
            let row = ta.row_slice(r);
            for s in 0..t {
                out[r * t + s] = row[s * k..(s + 1) * k]
                    .iter()
                    .zip(tv.data())
                    .map(|(&x, &y)| x * y)
                    .sum();
            }
        }
        let out = Tensor::new(vec![m, t], out)?;
        self.push("block_dot", out, Op::BlockDot(a, v), &[a, v])
    }

    /// `out[r, :] = sum_s w[r, s] * e[r, s*k..(s+1)*k]` for `w[m, t]`, `e[m, t*k]`.
    pub fn block_weighted_sum(&mut self, w: Var, e: Var) -> Result<Var> {
        let (tw, te) = (self.value(w), self.value(e));
        let t = tw.cols();
        if tw.rows() != te.rows() || te.cols() % t != 0 {
            return Err(shape_err("block_weighted_sum", tw, te));
        }
        let k = te.cols() / t;
        let m = tw.rows();
        let mut out = vec![T::zero(); m * k];
        for r in 0..m {
            let erow = te.row_slice(r);
            let orow = &mut out[r * k..(r + 1) * k];
            for s in 0..t {
                let ws = tw.at(r, s);
                for (o, &x) in orow.iter_mut().zip(&erow[s * k..(s + 1) * k]) {
                    *o += ws * x;
                }
            }
        }
        let out = Tensor::new(vec![m, k], out)?;
        self.push("block_weighted_sum", out, Op::BlockWeightedSum(w, e), &[w, e])
    }

    /// Inverted dropout. Identity when not training or when `rate == 0`.
    pub fn dropout(&mut self, a: Var, rate: f64, training: bool, rng: &mut Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::usage(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(a);
        }
        let keep = T::of(1.0 / (1.0 - rate));
        let ta = self.value(a);
        let mask: Vec<T> = (0..ta.numel())
            .map(|_| if rng.uniform() < rate { T::zero() } else { keep })
            .collect();
        let data = ta.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.push("dropout", out, Op::Dropout(a, mask), &[a])
    }

    /// Runs reverse accumulation from a scalar `loss`, consuming the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).numel() != 1 {
            return Err(Error::usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(self.shape(loss), T::one()));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            self.propagate(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }

        let mut params = Grads::empty(self.params.len());
        for (id, v) in &self.param_vars {
            if let Some(g) = grads[v.0].take() {
                params.0[id.0] = Some(g);
            }
        }
        Ok(Gradients { nodes: grads, params })
    }

    fn propagate(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let out = self.nodes[i].value.as_ref();
        let mut acc = |v: Var, f: &dyn Fn(&mut Tensor<T>)| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            let slot = &mut grads[v.0];
            if slot.is_none() {
                *slot = Some(Tensor::zeros(self.value(v).shape()));
            }
            f(slot.as_mut().unwrap());
        };
        match &self.nodes[i].op {
            Op::Leaf | Op::Param(_) => {}
            Op::Add(a, b) => {
                acc(*a, &|t| t.add_assign(g));
                acc(*b, &|t| t.add_assign(g));
            }
            Op::Sub(a, b) => {
                acc(*a, &|t| t.add_assign(g));
                acc(*b, &|t| {
                    for (x, &y) in t.data_mut().iter_mut().zip(g.data()) {
                        *x -= y;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                acc(*a, &|t| {
                    for ((x, &gy), &bv) in t.data_mut().iter_mut().zip(g.data()).zip(tb.data()) {
                        *x += gy * bv;
                    }
                });
                acc(*b, &|t| {
                    for ((x, &gy), &av) in t.data_mut().iter_mut().zip(g.data()).zip(ta.data()) {
                        *x += gy * av;
                    }
                });
            }
            Op::AddRow(a, row) => {
                acc(*a, &|t| t.add_assign(g));
                let n = g.cols();
                acc(*row, &|t| {
                    for r in 0..g.rows() {
                        for (x, &gy) in t.data_mut().iter_mut().zip(&g.data()[r * n..(r + 1) * n]) {
                            *x += gy;
                        }
                    }
                });
            }
            Op::MulCol(a, col) => {
                let (ta, tc) = (self.value(*a), self.value(*col));
                let n = g.cols();
                acc(*a, &|t| {
                    for r in 0..g.rows() {
                        let s = tc.data()[r];
                        for (x, &gy) in t.data_mut()[r * n..(r + 1) * n]
                            .iter_mut()
                            .zip(&g.data()[r * n..(r + 1) * n])
                        {
                            *x += gy * s;
                        }
                    }
                });
                acc(*col, &|t| {
                    for r in 0..g.rows() {
                        let d: T = g.data()[r * n..(r + 1) * n]
                            .iter()
                            .zip(ta.row_slice(r))
                            .map(|(&x, &y)| x * y)
                            .sum();
                        t.data_mut()[r] += d;
                    }
                });
            }
            Op::Scale(a, f) => acc(*a, &|t| {
                for (x, &gy) in t.data_mut().iter_mut().zip(g.data()) {
                    *x += gy * *f;
                }
            }),
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                acc(*a, &|t| matmul_nt_acc(g.data(), tb.data(), t.data_mut(), m, k, n));
                acc(*b, &|t| matmul_tn_acc(ta.data(), g.data(), t.data_mut(), m, k, n));
            }
            Op::ConcatCols(parts) => {
                let n = g.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    acc(p, &|t| {
                        for r in 0..g.rows() {
                            let src = &g.data()[r * n + offset..r * n + offset + w];
                            for (x, &gy) in t.data_mut()[r * w..(r + 1) * w].iter_mut().zip(src) {
                                *x += gy;
                            }
                        }
                    });
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).numel();
                    acc(p, &|t| {
                        for (x, &gy) in t.data_mut().iter_mut().zip(&g.data()[offset..offset + len]) {
                            *x += gy;
                        }
                    });
                    offset += len;
                }
            }
            Op::SliceCols(a, start) => {
                let n = self.value(*a).cols();
                let w = g.cols();
                acc(*a, &|t| {
                    for r in 0..g.rows() {
                        let dst = &mut t.data_mut()[r * n + start..r * n + start + w];
                        for (x, &gy) in dst.iter_mut().zip(&g.data()[r * w..(r + 1) * w]) {
                            *x += gy;
                        }
                    }
                });
            }
            Op::SliceRows(a, start) => {
                let offset = start * g.cols();
                acc(*a, &|t| {
                    for (x, &gy) in t.data_mut()[offset..offset + g.numel()].iter_mut().zip(g.data()) {
                        *x += gy;
                    }
                });
            }
            Op::Gather(table, ids) => {
                let d = g.cols();
                acc(*table, &|t| {
                    for (r, &id) in ids.iter().enumerate() {
                        for (x, &gy) in t.data_mut()[id * d..(id + 1) * d]
                            .iter_mut()
                            .zip(&g.data()[r * d..(r + 1) * d])
                        {
                            *x += gy;
                        }
                    }
                });
            }
            Op::Tanh(a) => {
                let y = out.unwrap();
                acc(*a, &|t| {
                    for ((x, &gy), &yv) in t.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                        *x += gy * (T::one() - yv * yv);
                    }
                });
            }
            Op::Sigmoid(a) => {
                let y = out.unwrap();
                acc(*a, &|t| {
                    for ((x, &gy), &yv) in t.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                        *x += gy * yv * (T::one() - yv);
                    }
                });
            }
            Op::Relu(a) => {
                let xin = self.value(*a);
                acc(*a, &|t| {
                    for ((x, &gy), &xv) in t.data_mut().iter_mut().zip(g.data()).zip(xin.data()) {
                        if xv > T::zero() {
                            *x += gy;
                        }
                    }
                });
            }
            Op::Log(a) => {
                let xin = self.value(*a);
                acc(*a, &|t| {
                    for ((x, &gy), &xv) in t.data_mut().iter_mut().zip(g.data()).zip(xin.data()) {
                        *x += gy / xv;
                    }
                });
            }
            Op::Softmax(a) => {
                let y = out.unwrap();
                let n = y.cols();
                acc(*a, &|t| {
                    for r in 0..y.rows() {
                        let yr = y.row_slice(r);
                        let gr = &g.data()[r * n..(r + 1) * n];
                        let dot: T = yr.iter().zip(gr).map(|(&p, &q)| p * q).sum();
                        for ((x, &yv), &gv) in t.data_mut()[r * n..(r + 1) * n].iter_mut().zip(yr).zip(gr) {
                            *x += yv * (gv - dot);
                        }
                    }
                });
            }
            Op::LogSoftmax(a) => {
                let y = out.unwrap();
                let n = y.cols();
                acc(*a, &|t| {
                    for r in 0..y.rows() {
                        let yr = y.row_slice(r);
                        let gr = &g.data()[r * n..(r + 1) * n];
                        let total: T = gr.iter().copied().sum();
                        for ((x, &yv), &gv) in t.data_mut()[r * n..(r + 1) * n].iter_mut().zip(yr).zip(gr) {
                            *x += gv - yv.exp() * total;
                        }
                    }
                });
            }
            Op::Sum(a) => {
                let gy = g.item();
                acc(*a, &|t| {
                    for x in t.data_mut() {
                        *x += gy;
                    }
                });
            }
            Op::Mean(a) => {
                let gy = g.item() / T::of(self.value(*a).numel() as f64);
                acc(*a, &|t| {
                    for x in t.data_mut() {
                        *x += gy;
                    }
                });
            }
            Op::MaxBlocks(a, arg) => {
                let n = g.cols();
                let m = g.rows();
                acc(*a, &|t| {
                    for r in 0..m {
                        for c in 0..n {
                            let b = arg[r * n + c];
                            t.data_mut()[(b * m + r) * n + c] += g.data()[r * n + c];
                        }
                    }
                });
            }
            Op::Pick(a, cols) => {
                let n = self.value(*a).cols();
                acc(*a, &|t| {
                    for (r, &c) in cols.iter().enumerate() {
                        t.data_mut()[r * n + c] += g.data()[r];
                    }
                });
            }
            Op::TileAdd(a, b) => {
                acc(*a, &|t| t.add_assign(g));
                let k = self.value(*b).cols();
                let n = g.cols();
                acc(*b, &|t| {
                    for r in 0..g.rows() {
                        for (j, gy) in g.data()[r * n..(r + 1) * n].iter().enumerate() {
                            t.data_mut()[r * k + j % k] += *gy;
                        }
                    }
                });
            }
            Op::BlockDot(a, v) => {
                let (ta, tv) = (self.value(*a), self.value(*v));
                let k = tv.numel();
                let steps = g.cols();
                acc(*a, &|t| {
                    let n = steps * k;
                    for r in 0..g.rows() {
                        for s in 0..steps {
                            let gy = g.at(r, s);
                            for (x, &vv) in t.data_mut()[r * n + s * k..r * n + (s + 1) * k]
                                .iter_mut()
                                .zip(tv.data())
                            {
                                *x += gy * vv;
                            }
                        }
                    }
                });
                acc(*v, &|t| {
                    for r in 0..g.rows() {
                        let row = ta.row_slice(r);
                        for s in 0..steps {
                            let gy = g.at(r, s);
                            for (x, &av) in t.data_mut().iter_mut().zip(&row[s * k..(s + 1) * k]) {
                                *x += gy * av;
                            }
                        }
                    }
                });
            }
            Op::BlockWeightedSum(w, e) => {
                let (tw, te) = (self.value(*w), self.value(*e));
                let steps = tw.cols();
                let k = g.cols();
                acc(*w, &|t| {
                    for r in 0..g.rows() {
                        let erow = te.row_slice(r);
                        let grow = g.row_slice(r);
                        for s in 0..steps {
                            let d: T = erow[s * k..(s + 1) * k].iter().zip(grow).map(|(&x, &y)| x * y).sum();
                            t.data_mut()[r * steps + s] += d;
                        }
                    }
                });
                acc(*e, &|t| {
                    let n = steps * k;
                    for r in 0..g.rows() {
                        let grow = g.row_slice(r);
                        for s in 0..steps {
                            let ws = tw.at(r, s);
                            for (x, &gy) in t.data_mut()[r * n + s * k..r * n + (s + 1) * k].iter_mut().zip(grow) {
                                *x += ws * gy;
                            }
                        }
                    }
                });
            }
            Op::Dropout(a, mask) => acc(*a, &|t| {
                for ((x, &gy), &m) in t.data_mut().iter_mut().zip(g.data()).zip(mask) {
                    *x += gy * m;
                }
            }),
        }
        Ok(())
    }
}
