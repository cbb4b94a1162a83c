//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Graph`] records every operation of a forward pass as a node holding
//! its value. [`Graph::backward`] walks the nodes in reverse insertion order
//! (which is a topological order) and accumulates adjoints. Only the
//! operations the interpolator needs are provided.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{NiertError, Result};
use crate::numerics::matrix::{gemm, Matrix};

static NEXT_GRAPH: AtomicU64 = AtomicU64::new(1);

/// Variance epsilon for [`Graph::layer_norm`].
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a node of one specific [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId {
    graph: u64,
    index: usize,
}

/// Pointwise error used by [`Graph::weighted_error`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ErrorNorm {
    L1,
    #[default]
    L2,
}

enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    MatMulTransB(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Scale(NodeId, f64),
    Relu(NodeId),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        xhat: Matrix,
        inv_std: Vec<f64>,
    },
    Softmax(NodeId),
    SliceRows(NodeId, usize),
    SliceCols(NodeId, usize),
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    RepeatRow(NodeId),
    Sum(NodeId),
    SquaredNorm(NodeId),
    WeightedError {
        pred: NodeId,
        target: Matrix,
        row_weights: Vec<f64>,
        norm: ErrorNorm,
        scale: f64,
    },
}

struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// A recorded forward computation.
pub struct Graph {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            id: NEXT_GRAPH.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId {
            graph: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn node(&self, id: NodeId) -> &Node {
        assert_eq!(id.graph, self.id, "node from a different graph");
        &self.nodes[id.index]
    }

    fn rg(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|&i| self.node(i).requires_grad)
    }

    /// A trainable input; gradients are reported for it.
    pub fn param(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// A fixed input; no gradient flows into it.
    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.node(id).value
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        self.node(id).value.shape()
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.cols() {
            return Err(NiertError::shape(format!(
                "matmul_t {:?} by {:?}ᵀ",
                va.shape(),
                vb.shape()
            )));
        }
        let mut out = Matrix::zeros(va.rows(), vb.rows());
        gemm(false, va, true, vb, 0.0, &mut out);
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::MatMulTransB(a, b), rg))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    /// Adds the `1 × c` row `row` to every row of `a`.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        let (va, vr) = (self.value(a), self.value(row));
        if vr.rows() != 1 || vr.cols() != va.cols() {
            return Err(NiertError::shape(format!(
                "add_row {:?} + {:?}",
                va.shape(),
                vr.shape()
            )));
        }
        let mut value = va.clone();
        let r = vr.row(0).to_vec();
        for i in 0..value.rows() {
            for (v, b) in value.row_mut(i).iter_mut().zip(&r) {
                *v += b;
            }
        }
        let rg = self.rg(&[a, row]);
        Ok(self.push(value, Op::AddRow(a, row), rg))
    }

    /// `a · W + b` with `b` a `1 × out` row.
    pub fn affine(&mut self, a: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let prod = self.matmul(a, w)?;
        self.add_row(prod, b)
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let value = self.value(a).scale(s);
        let rg = self.rg(&[a]);
        self.push(value, Op::Scale(a, s), rg)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(|v| v.max(0.0));
        let rg = self.rg(&[a]);
        self.push(value, Op::Relu(a), rg)
    }

    /// Row-wise layer normalization with per-column gain and bias rows.
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> Result<NodeId> {
        let vx = self.value(x);
        let d = vx.cols();
        for p in [gain, bias] {
            if self.shape(p) != (1, d) {
                return Err(NiertError::shape(format!(
                    "layer_norm parameter {:?} for width {d}",
                    self.shape(p)
                )));
            }
        }
        let g = self.value(gain).row(0);
        let b = self.value(bias).row(0);
        let mut xhat = Matrix::zeros(vx.rows(), d);
        let mut out = Matrix::zeros(vx.rows(), d);
        let mut inv_std = Vec::with_capacity(vx.rows());
        for r in 0..vx.rows() {
            let row = vx.row(r);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std.push(inv);
            for c in 0..d {
                let h = (row[c] - mean) * inv;
                xhat[(r, c)] = h;
                out[(r, c)] = h * g[c] + b[c];
            }
        }
        let rg = self.rg(&[x, gain, bias]);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            rg,
        ))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let mut value = self.value(a).clone();
        for r in 0..value.rows() {
            let row = value.row_mut(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        let rg = self.rg(&[a]);
        self.push(value, Op::Softmax(a), rg)
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let va = self.value(a);
        if start > end || end > va.rows() {
            return Err(NiertError::shape(format!(
                "rows {start}..{end} of {:?}",
                va.shape()
            )));
        }
        let value = va.slice_rows(start, end);
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::SliceRows(a, start), rg))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, width: usize) -> Result<NodeId> {
        let va = self.value(a);
        if start + width > va.cols() {
            return Err(NiertError::shape(format!(
                "cols {start}+{width} of {:?}",
                va.shape()
            )));
        }
        let value = va.slice_cols(start, width);
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::SliceCols(a, start), rg))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let rows = parts.first().map_or(0, |&p| self.shape(p).0);
        if parts.iter().any(|&p| self.shape(p).0 != rows) {
            return Err(NiertError::shape("concat_cols with differing row counts"));
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let rg = self.rg(parts);
        Ok(self.push(Matrix::from_raw(rows, cols, data), Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let cols = parts.first().map_or(0, |&p| self.shape(p).1);
        if parts.iter().any(|&p| self.shape(p).1 != cols) {
            return Err(NiertError::shape("concat_rows with differing column counts"));
        }
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            rows += v.rows();
            data.extend_from_slice(v.as_slice());
        }
        let rg = self.rg(parts);
        Ok(self.push(Matrix::from_raw(rows, cols, data), Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Stacks `count` copies of the `1 × c` row `a`.
    pub fn repeat_row(&mut self, a: NodeId, count: usize) -> Result<NodeId> {
        let va = self.value(a);
        if va.rows() != 1 {
            return Err(NiertError::shape(format!("repeat_row of {:?}", va.shape())));
        }
        let value = Matrix::from_raw(count, va.cols(), va.as_slice().repeat(count));
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::RepeatRow(a), rg))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let value = Matrix::filled(1, 1, self.value(a).sum());
        let rg = self.rg(&[a]);
        self.push(value, Op::Sum(a), rg)
    }

    /// Sum of squared entries.
    pub fn squared_norm(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).as_slice().iter().map(|v| v * v).sum();
        let rg = self.rg(&[a]);
        self.push(Matrix::filled(1, 1, s), Op::SquaredNorm(a), rg)
    }

    /// `scale · Σ_r row_weights[r] · Σ_c err(pred[r,c] − target[r,c])`.
    pub fn weighted_error(
        &mut self,
        pred: NodeId,
        target: Matrix,
        row_weights: Vec<f64>,
        norm: ErrorNorm,
        scale: f64,
    ) -> Result<NodeId> {
        let vp = self.value(pred);
        vp.same_shape(&target)?;
        if row_weights.len() != vp.rows() {
            return Err(NiertError::shape(format!(
                "{} row weights for {} rows",
                row_weights.len(),
                vp.rows()
            )));
        }
        let mut total = 0.0;
        for (r, w) in row_weights.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            let e: f64 = vp
                .row(r)
                .iter()
                .zip(target.row(r))
                .map(|(p, t)| match norm {
                    ErrorNorm::L1 => (p - t).abs(),
                    ErrorNorm::L2 => (p - t) * (p - t),
                })
                .sum();
            total += w * e;
        }
        let rg = self.rg(&[pred]);
        Ok(self.push(
            Matrix::filled(1, 1, scale * total),
            Op::WeightedError {
                pred,
                target,
                row_weights,
                norm,
                scale,
            },
            rg,
        ))
    }

    /// Reverse-mode derivatives of the scalar node `output` with respect to
    /// every node that depends on a [`Graph::param`].
    pub fn backward(&self, output: NodeId) -> Result<Gradients> {
        if output.graph != self.id || output.index >= self.nodes.len() {
            return Err(NiertError::GraphNotRecorded);
        }
        if self.value(output).shape() != (1, 1) {
            return Err(NiertError::shape(format!(
                "backward from non-scalar node {:?}",
                self.value(output).shape()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; output.index + 1];
        grads[output.index] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=output.index).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients {
            graph: self.id,
            grads,
        })
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let needs = |id: NodeId| self.nodes[id.index].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (&self.nodes[a.index].value, &self.nodes[b.index].value);
                if needs(*a) {
                    let mut da = Matrix::zeros(va.rows(), va.cols());
                    gemm(false, g, true, vb, 0.0, &mut da);
                    accumulate(grads, *a, da);
                }
                if needs(*b) {
                    let mut db = Matrix::zeros(vb.rows(), vb.cols());
                    gemm(true, va, false, g, 0.0, &mut db);
                    accumulate(grads, *b, db);
                }
            }
            Op::MatMulTransB(a, b) => {
                let (va, vb) = (&self.nodes[a.index].value, &self.nodes[b.index].value);
                if needs(*a) {
                    let mut da = Matrix::zeros(va.rows(), va.cols());
                    gemm(false, g, false, vb, 0.0, &mut da);
                    accumulate(grads, *a, da);
                }
                if needs(*b) {
                    let mut db = Matrix::zeros(vb.rows(), vb.cols());
                    gemm(true, g, false, va, 0.0, &mut db);
                    accumulate(grads, *b, db);
                }
            }
            Op::Add(a, b) => {
                for id in [a, b] {
                    if needs(*id) {
                        accumulate(grads, *id, g.clone());
                    }
                }
            }
            Op::AddRow(a, row) => {
                if needs(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if needs(*row) {
                    accumulate(grads, *row, column_sums(g));
                }
            }
            Op::Scale(a, s) => {
                if needs(*a) {
                    accumulate(grads, *a, g.scale(*s));
                }
            }
            Op::Relu(a) => {
                if needs(*a) {
                    let input = &self.nodes[a.index].value;
                    let d = Matrix::from_raw(
                        g.rows(),
                        g.cols(),
                        g.as_slice()
                            .iter()
                            .zip(input.as_slice())
                            .map(|(gv, x)| if *x > 0.0 { *gv } else { 0.0 })
                            .collect(),
                    );
                    accumulate(grads, *a, d);
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let gv = self.nodes[gain.index].value.row(0);
                let d = xhat.cols();
                if needs(*gain) {
                    let mut dg = Matrix::zeros(1, d);
                    for r in 0..g.rows() {
                        for c in 0..d {
                            dg[(0, c)] += g[(r, c)] * xhat[(r, c)];
                        }
                    }
                    accumulate(grads, *gain, dg);
                }
                if needs(*bias) {
                    accumulate(grads, *bias, column_sums(g));
                }
                if needs(*x) {
                    let mut dx = Matrix::zeros(g.rows(), d);
                    let mut dxhat = vec![0.0; d];
                    for r in 0..g.rows() {
                        let mut s1 = 0.0;
                        let mut s2 = 0.0;
                        for c in 0..d {
                            dxhat[c] = g[(r, c)] * gv[c];
                            s1 += dxhat[c];
                            s2 += dxhat[c] * xhat[(r, c)];
                        }
                        let k = inv_std[r] / d as f64;
                        for c in 0..d {
                            dx[(r, c)] = k * (d as f64 * dxhat[c] - s1 - xhat[(r, c)] * s2);
                        }
                    }
                    accumulate(grads, *x, dx);
                }
            }
            Op::Softmax(a) => {
                if needs(*a) {
                    let y = &node.value;
                    let mut dx = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(a, b)| a * b).sum();
                        for c in 0..y.cols() {
                            dx[(r, c)] = y[(r, c)] * (g[(r, c)] - dot);
                        }
                    }
                    accumulate(grads, *a, dx);
                }
            }
            Op::SliceRows(a, start) => {
                if needs(*a) {
                    let (rows, cols) = self.nodes[a.index].value.shape();
                    let mut d = Matrix::zeros(rows, cols);
                    d.as_mut_slice()[start * cols..(start + g.rows()) * cols]
                        .copy_from_slice(g.as_slice());
                    accumulate(grads, *a, d);
                }
            }
            Op::SliceCols(a, start) => {
                if needs(*a) {
                    let (rows, cols) = self.nodes[a.index].value.shape();
                    let mut d = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        d.row_mut(r)[*start..start + g.cols()].copy_from_slice(g.row(r));
                    }
                    accumulate(grads, *a, d);
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let w = self.nodes[p.index].value.cols();
                    if needs(*p) {
                        accumulate(grads, *p, g.slice_cols(offset, w));
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let h = self.nodes[p.index].value.rows();
                    if needs(*p) {
                        accumulate(grads, *p, g.slice_rows(offset, offset + h));
                    }
                    offset += h;
                }
            }
            Op::RepeatRow(a) => {
                if needs(*a) {
                    accumulate(grads, *a, column_sums(g));
                }
            }
            Op::Sum(a) => {
                if needs(*a) {
                    let (rows, cols) = self.nodes[a.index].value.shape();
                    accumulate(grads, *a, Matrix::filled(rows, cols, g[(0, 0)]));
                }
            }
            Op::SquaredNorm(a) => {
                if needs(*a) {
                    let s = 2.0 * g[(0, 0)];
                    accumulate(grads, *a, self.nodes[a.index].value.scale(s));
                }
            }
            Op::WeightedError {
                pred,
                target,
                row_weights,
                norm,
                scale,
            } => {
                if needs(*pred) {
                    let vp = &self.nodes[pred.index].value;
                    let mut d = Matrix::zeros(vp.rows(), vp.cols());
                    let outer = g[(0, 0)] * scale;
                    for (r, w) in row_weights.iter().enumerate() {
                        if *w == 0.0 {
                            continue;
                        }
                        for c in 0..vp.cols() {
                            let diff = vp[(r, c)] - target[(r, c)];
                            let local = match norm {
                                ErrorNorm::L1 => {
                                    if diff > 0.0 {
                                        1.0
                                    } else if diff < 0.0 {
                                        -1.0
                                    } else {
                                        0.0
                                    }
                                }
                                ErrorNorm::L2 => 2.0 * diff,
                            };
                            d[(r, c)] = outer * w * local;
                        }
                    }
                    accumulate(grads, *pred, d);
                }
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Matrix>], id: NodeId, delta: Matrix) {
    match &mut grads[id.index] {
        Some(existing) => {
            for (a, b) in existing.as_mut_slice().iter_mut().zip(delta.as_slice()) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(delta),
    }
}

fn column_sums(g: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(1, g.cols());
    for row in g.row_iter() {
        for (o, v) in out.as_mut_slice().iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}

/// Adjoints produced by [`Graph::backward`].
pub struct Gradients {
    graph: u64,
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient for `id`, or `None` when the output does not depend on it.
    pub fn get(&self, id: NodeId) -> Option<&Matrix> {
        if id.graph != self.graph {
            return None;
        }
        self.grads.get(id.index).and_then(Option::as_ref)
    }

    /// Like [`Gradients::get`] but fills with zeros of the given shape.
    pub fn get_or_zeros(&self, id: NodeId, shape: (usize, usize)) -> Matrix {
        self.get(id)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_diff::{finite_diff_grad, max_relative_error};
    use crate::numerics::RngStream;

    fn random_matrix(rng: &mut RngStream, rows: usize, cols: usize) -> Matrix {
        Matrix::from_raw(rows, cols, (0..rows * cols).map(|_| rng.uniform(-1.0, 1.0)).collect())
    }

    /// Checks the gradient of a scalar graph built by `build` from one
    /// parameter matrix against central differences.
    fn check<F>(param: Matrix, build: F)
    where
        F: Fn(&mut Graph, NodeId) -> NodeId,
    {
        let mut g = Graph::new();
        let p = g.param(param.clone());
        let out = build(&mut g, p);
        let grads = g.backward(out).unwrap();
        let analytic = grads.get_or_zeros(p, param.shape());
        let (rows, cols) = param.shape();
        let numeric = finite_diff_grad(
            |flat| {
                let mut g = Graph::new();
                let p = g.param(Matrix::from_raw(rows, cols, flat.to_vec()));
                let out = build(&mut g, p);
                g.value(out)[(0, 0)]
            },
            param.as_slice(),
            1e-5,
        )
        .unwrap();
        let err = max_relative_error(analytic.as_slice(), &numeric, 1e-6);
        assert!(err < 1e-4, "relative error {err}: {analytic:?} vs {numeric:?}");
    }

    #[test]
    fn sum_gives_ones() {
        let mut g = Graph::new();
        let p = g.param(Matrix::from_rows(&[vec![1.0, -2.0], vec![3.0, 0.5]]).unwrap());
        let s = g.sum(p);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(p).unwrap().as_slice(), &[1.0; 4]);
    }

    #[test]
    fn squared_norm_of_product() {
        let w = Matrix::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.0, 3.0]]).unwrap();
        let x = Matrix::column_vector(&[2.0, -1.0]);
        let mut g = Graph::new();
        let pw = g.param(w.clone());
        let cx = g.constant(x.clone());
        let wx = g.matmul(pw, cx).unwrap();
        let loss = g.squared_norm(wx);
        let grads = g.backward(loss).unwrap();
        // d‖Wx‖²/dW = 2 (Wx) xᵀ
        let wxv = w.matmul(&x).unwrap();
        let expected = wxv.scale(2.0).matmul(&x.transpose()).unwrap();
        assert_eq!(grads.get(pw).unwrap(), &expected);
        assert!(grads.get(cx).is_none());
        check(w, |g, p| {
            let cx = g.constant(x.clone());
            let wx = g.matmul(p, cx).unwrap();
            g.squared_norm(wx)
        });
    }

    #[test]
    fn foreign_node_is_not_recorded() {
        let mut a = Graph::new();
        let p = a.param(Matrix::filled(1, 1, 1.0));
        let b = Graph::new();
        assert!(matches!(b.backward(p), Err(NiertError::GraphNotRecorded)));
    }

    #[test]
    fn non_scalar_output_rejected() {
        let mut a = Graph::new();
        let p = a.param(Matrix::zeros(2, 2));
        assert!(matches!(a.backward(p), Err(NiertError::ShapeMismatch(_))));
    }

    #[test]
    fn op_gradients_match_finite_differences() {
        let mut rng = RngStream::new(11, 0);
        let a = random_matrix(&mut rng, 3, 4);
        let b = random_matrix(&mut rng, 4, 2);
        let c = random_matrix(&mut rng, 5, 4);
        let weights = random_matrix(&mut rng, 3, 2);

        check(a.clone(), |g, p| {
            let cb = g.constant(b.clone());
            let y = g.matmul(p, cb).unwrap();
            let w = g.constant(weights.clone());
            let y = g.add(y, w).unwrap();
            g.squared_norm(y)
        });
        check(a.clone(), |g, p| {
            let cc = g.constant(c.clone());
            let y = g.matmul_t(p, cc).unwrap();
            let y = g.softmax(y);
            let t = g.constant(random_like(3, 5));
            let y = g.add(y, t).unwrap();
            g.squared_norm(y)
        });
        check(c.clone(), |g, p| {
            let ca = g.constant(a.clone());
            let y = g.matmul_t(ca, p).unwrap();
            let y = g.scale(y, 0.7);
            g.squared_norm(y)
        });
        check(a.clone(), |g, p| {
            let gain = g.constant(Matrix::row_vector(&[1.0, 0.5, -2.0, 1.5]));
            let bias = g.constant(Matrix::row_vector(&[0.1, 0.0, -0.3, 0.2]));
            let y = g.layer_norm(p, gain, bias).unwrap();
            let t = g.constant(random_like(3, 4));
            let y = g.add(y, t).unwrap();
            g.squared_norm(y)
        });
        let gain0 = Matrix::row_vector(&[1.0, 0.5, -2.0, 1.5]);
        check(gain0, |g, p| {
            let x = g.constant(a.clone());
            let bias = g.constant(Matrix::row_vector(&[0.1, 0.0, -0.3, 0.2]));
            let y = g.layer_norm(x, p, bias).unwrap();
            let t = g.constant(random_like(3, 4));
            let y = g.add(y, t).unwrap();
            g.squared_norm(y)
        });
        check(Matrix::row_vector(&[0.3, -0.2, 0.5, 0.1]), |g, p| {
            let x = g.constant(a.clone());
            let y = g.add_row(x, p).unwrap();
            let y = g.relu(y);
            g.squared_norm(y)
        });
        check(Matrix::row_vector(&[0.3, -0.2]), |g, p| {
            let rep = g.repeat_row(p, 3).unwrap();
            let other = g.constant(weights.clone());
            let stacked = g.concat_rows(&[other, rep]).unwrap();
            let wide = g.concat_cols(&[stacked, stacked]).unwrap();
            let part = g.slice_cols(wide, 1, 2).unwrap();
            let part = g.slice_rows(part, 2, 5).unwrap();
            g.squared_norm(part)
        });
        for norm in [ErrorNorm::L1, ErrorNorm::L2] {
            check(weights.clone(), |g, p| {
                g.weighted_error(p, b.slice_rows(0, 3), vec![1.0, 0.0, 2.0], norm, 0.25)
                    .unwrap()
            });
        }
    }

    fn random_like(rows: usize, cols: usize) -> Matrix {
        let mut rng = RngStream::new(99, (rows * 31 + cols) as u64);
        random_matrix(&mut rng, rows, cols)
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut g = Graph::new();
        let a = g.constant(Matrix::from_rows(&[vec![1000.0, 0.0, -5.0], vec![1.0, 1.0, 1.0]]).unwrap());
        let s = g.softmax(a);
        for row in g.value(s).row_iter() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!((g.value(s)[(1, 0)] - 1.0 / 3.0).abs() < 1e-15);
    }
}
