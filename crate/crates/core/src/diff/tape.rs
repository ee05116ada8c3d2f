//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records every operation of a forward pass as a node holding its
//! value. [`Tape::backward`] sweeps the nodes once in reverse order and
//! accumulates vector-Jacobian products. Nodes that cannot reach a parameter
//! or a gradient-tracking input are skipped.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::tensor::{gemm, matmul, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Process-unique identity of a trainable tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(u64);

static NEXT_PARAM_ID: AtomicU64 = AtomicU64::new(1);

impl ParamId {
    pub fn fresh() -> Self {
        Self(NEXT_PARAM_ID.fetch_add(1, Ordering::Relaxed))
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Shift(Var),
    Relu(Var),
    Softplus(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Minimum(Var, Var),
    Clamp(Var, f64, f64),
    Sum(Var),
    Mean(Var),
    RowSum(Var),
    ConcatCols(Var, Var),
    SliceCols(Var, usize, usize),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
}

/// Ordered record of a forward computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Result of a backward sweep.
#[derive(Debug)]
pub struct Gradients {
    params: BTreeMap<ParamId, Tensor>,
    nodes: Vec<Option<Tensor>>,
    visited: usize,
}

impl Gradients {
    /// Gradient map built by hand, e.g. from an analytic derivative.
    pub fn from_params(entries: impl IntoIterator<Item = (ParamId, Tensor)>) -> Self {
        Self { params: entries.into_iter().collect(), nodes: Vec::new(), visited: 0 }
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(&id)
    }

    /// Gradient of the loss with respect to an arbitrary recorded node.
    pub fn wrt(&self, var: Var) -> Option<&Tensor> {
        self.nodes.get(var.0).and_then(Option::as_ref)
    }

    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.params.keys().copied()
    }

    /// Number of nodes processed by the reverse sweep.
    pub fn visited(&self) -> usize {
        self.visited
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    let y = if x > 0.0 { x + (-x).exp().ln_1p() } else { x.exp().ln_1p() };
    y.max(f64::MIN_POSITIVE)
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    assert_eq!(a.shape(), b.shape(), "elementwise op on mismatched shapes");
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("shape preserved")
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

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    /// Ids of every parameter recorded as trainable on this tape.
    pub fn trainable_params(&self) -> Vec<ParamId> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Param(id) => Some(id),
                _ => None,
            })
            .collect()
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> Var {
        self.nodes.push(Node { op, value, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A constant input; no gradient is propagated into it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, false)
    }

    /// An input whose gradient is reported by [`Gradients::wrt`].
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, true)
    }

    pub fn param(&mut self, id: ParamId, value: Tensor) -> Var {
        self.push(Op::Param(id), value, true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let (n, k, m) = (av.rows(), av.cols(), bv.cols());
        assert_eq!(k, bv.rows(), "matmul inner dimensions differ");
        let out = Tensor::matrix(n, m, matmul(av.data(), bv.data(), n, k, m)).expect("matmul shape");
        let ng = self.ng(a) || self.ng(b);
        self.push(Op::MatMul(a, b), out, ng)
    }

    /// Adds a `[1, m]` row to every row of an `[n, m]` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Var {
        let (xv, bv) = (self.value(x), self.value(bias));
        let m = xv.cols();
        assert_eq!(bv.numel(), m, "bias width differs from input width");
        let mut out = xv.clone();
        for row in out.data_mut().chunks_mut(m) {
            for (o, b) in row.iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        let ng = self.ng(x) || self.ng(bias);
        self.push(Op::AddBias(x, bias), out, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = zip_map(self.value(a), self.value(b), |x, y| x + y);
        let ng = self.ng(a) || self.ng(b);
        self.push(Op::Add(a, b), out, ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = zip_map(self.value(a), self.value(b), |x, y| x - y);
        let ng = self.ng(a) || self.ng(b);
        self.push(Op::Sub(a, b), out, ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = zip_map(self.value(a), self.value(b), |x, y| x * y);
        let ng = self.ng(a) || self.ng(b);
        self.push(Op::Mul(a, b), out, ng)
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Var {
        let out = zip_map(self.value(a), self.value(b), f64::min);
        let ng = self.ng(a) || self.ng(b);
        self.push(Op::Minimum(a, b), out, ng)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x).map(|v| v * c);
        let ng = self.ng(x);
        self.push(Op::Scale(x, c), out, ng)
    }

    pub fn shift(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x).map(|v| v + c);
        let ng = self.ng(x);
        self.push(Op::Shift(x), out, ng)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(0.0));
        let ng = self.ng(x);
        self.push(Op::Relu(x), out, ng)
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        let out = self.value(x).map(softplus);
        let ng = self.ng(x);
        self.push(Op::Softplus(x), out, ng)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::tanh);
        let ng = self.ng(x);
        self.push(Op::Tanh(x), out, ng)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::exp);
        let ng = self.ng(x);
        self.push(Op::Exp(x), out, ng)
    }

    pub fn log(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::ln);
        let ng = self.ng(x);
        self.push(Op::Log(x), out, ng)
    }

    pub fn square(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v * v);
        let ng = self.ng(x);
        self.push(Op::Square(x), out, ng)
    }

    /// Elementwise clamp; the gradient is zero where the bound is active.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(x).map(|v| v.clamp(lo, hi));
        let ng = self.ng(x);
        self.push(Op::Clamp(x, lo, hi), out, ng)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        let ng = self.ng(x);
        self.push(Op::Sum(x), out, ng)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).mean());
        let ng = self.ng(x);
        self.push(Op::Mean(x), out, ng)
    }

    /// Sums each row, producing an `[n, 1]` column.
    pub fn row_sum(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let c = xv.cols();
        let sums = xv.data().chunks(c.max(1)).map(|r| r.iter().sum()).collect();
        let out = Tensor::column(sums);
        let ng = self.ng(x);
        self.push(Op::RowSum(x), out, ng)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let out = Tensor::concat_cols(self.value(a), self.value(b)).expect("concat_cols rows differ");
        let ng = self.ng(a) || self.ng(b);
        self.push(Op::ConcatCols(a, b), out, ng)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Var {
        let out = self.value(x).slice_cols(start, end);
        let ng = self.ng(x);
        self.push(Op::SliceCols(x, start, end), out, ng)
    }

    /// Reverse sweep from a scalar loss node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        if !lv.is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(lv.shape(), 1.0));
        let mut params = BTreeMap::new();
        let mut visited = 0;

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            if grads[idx].is_none() {
                continue;
            }
            visited += 1;
            // leaves keep their gradient so callers can read it
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let g = grads[idx].take().expect("checked above");
            match node.op {
                Op::Leaf => unreachable!(),
                Op::Param(id) => {
                    params.entry(id).and_modify(|acc: &mut Tensor| acc.axpy(1.0, &g)).or_insert_with(|| g.clone());
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(a), self.value(b));
                    let (n, k, m) = (av.rows(), av.cols(), bv.cols());
                    if self.ng(a) {
                        // dA = dC · B^T
                        let mut da = vec![0.0; n * k];
                        gemm(g.data(), false, bv.data(), true, &mut da, n, m, k, 0.0);
                        accumulate(&mut grads, a, Tensor::matrix(n, k, da)?);
                    }
                    if self.ng(b) {
                        // dB = A^T · dC
                        let mut db = vec![0.0; k * m];
                        gemm(av.data(), true, g.data(), false, &mut db, k, n, m, 0.0);
                        accumulate(&mut grads, b, Tensor::new(bv.shape().to_vec(), db)?);
                    }
                }
                Op::AddBias(x, bias) => {
                    if self.ng(bias) {
                        let bshape = self.value(bias).shape().to_vec();
                        let m = g.cols();
                        let mut db = vec![0.0; m];
                        for row in g.data().chunks(m) {
                            for (d, v) in db.iter_mut().zip(row) {
                                *d += v;
                            }
                        }
                        accumulate(&mut grads, bias, Tensor::new(bshape, db)?);
                    }
                    if self.ng(x) {
                        accumulate(&mut grads, x, g);
                    }
                }
                Op::Add(a, b) => {
                    if self.ng(a) {
                        accumulate(&mut grads, a, g.clone());
                    }
                    if self.ng(b) {
                        accumulate(&mut grads, b, g);
                    }
                }
                Op::Sub(a, b) => {
                    if self.ng(a) {
                        accumulate(&mut grads, a, g.clone());
                    }
                    if self.ng(b) {
                        accumulate(&mut grads, b, g.map(|v| -v));
                    }
                }
                Op::Mul(a, b) => {
                    if self.ng(a) {
                        accumulate(&mut grads, a, zip_map(&g, self.value(b), |d, y| d * y));
                    }
                    if self.ng(b) {
                        accumulate(&mut grads, b, zip_map(&g, self.value(a), |d, x| d * x));
                    }
                }
                Op::Minimum(a, b) => {
                    let (av, bv) = (self.value(a), self.value(b));
                    // ties route the gradient to the first operand
                    if self.ng(a) {
                        let mut d = g.clone();
                        for ((o, x), y) in d.data_mut().iter_mut().zip(av.data()).zip(bv.data()) {
                            if x > y {
                                *o = 0.0;
                            }
                        }
                        accumulate(&mut grads, a, d);
                    }
                    if self.ng(b) {
                        let mut d = g;
                        for ((o, x), y) in d.data_mut().iter_mut().zip(av.data()).zip(bv.data()) {
                            if x <= y {
                                *o = 0.0;
                            }
                        }
                        accumulate(&mut grads, b, d);
                    }
                }
                Op::Scale(x, c) => accumulate(&mut grads, x, g.map(|v| v * c)),
                Op::Shift(x) => accumulate(&mut grads, x, g),
                Op::Relu(x) => {
                    let d = zip_map(&g, self.value(x), |d, v| if v > 0.0 { d } else { 0.0 });
                    accumulate(&mut grads, x, d);
                }
                Op::Softplus(x) => {
                    let d = zip_map(&g, self.value(x), |d, v| d * sigmoid(v));
                    accumulate(&mut grads, x, d);
                }
                Op::Tanh(x) => {
                    let d = zip_map(&g, &node.value, |d, y| d * (1.0 - y * y));
                    accumulate(&mut grads, x, d);
                }
                Op::Exp(x) => {
                    let d = zip_map(&g, &node.value, |d, y| d * y);
                    accumulate(&mut grads, x, d);
                }
                Op::Log(x) => {
                    let d = zip_map(&g, self.value(x), |d, v| d / v);
                    accumulate(&mut grads, x, d);
                }
                Op::Square(x) => {
                    let d = zip_map(&g, self.value(x), |d, v| 2.0 * d * v);
                    accumulate(&mut grads, x, d);
                }
                Op::Clamp(x, lo, hi) => {
                    let d = zip_map(&g, self.value(x), |d, v| if v < lo || v > hi { 0.0 } else { d });
                    accumulate(&mut grads, x, d);
                }
                Op::Sum(x) | Op::Mean(x) => {
                    let xv = self.value(x);
                    let scale = if matches!(node.op, Op::Mean(_)) { 1.0 / xv.numel().max(1) as f64 } else { 1.0 };
                    accumulate(&mut grads, x, Tensor::filled(xv.shape(), g.item() * scale));
                }
                Op::RowSum(x) => {
                    let xv = self.value(x);
                    let c = xv.cols();
                    let mut d = Tensor::zeros(xv.shape());
                    for (row, gi) in d.data_mut().chunks_mut(c.max(1)).zip(g.data()) {
                        row.iter_mut().for_each(|v| *v = *gi);
                    }
                    accumulate(&mut grads, x, d);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.value(a).cols();
                    let cb = self.value(b).cols();
                    if self.ng(a) {
                        accumulate(&mut grads, a, g.slice_cols(0, ca));
                    }
                    if self.ng(b) {
                        accumulate(&mut grads, b, g.slice_cols(ca, ca + cb));
                    }
                }
                Op::SliceCols(x, start, end) => {
                    let xv = self.value(x);
                    let c = xv.cols();
                    let w = end - start;
                    let mut d = Tensor::zeros(xv.shape());
                    for (row, grow) in d.data_mut().chunks_mut(c).zip(g.data().chunks(w)) {
                        row[start..end].copy_from_slice(grow);
                    }
                    accumulate(&mut grads, x, d);
                }
            }
        }
        Ok(Gradients { params, nodes: grads, visited })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(acc) => acc.axpy(1.0, &g),
        slot => *slot = Some(g),
    }
}
