//! Forward ops and the backward dispatcher.
//!
//! Broadcasting is deliberately narrow: two operands either share a shape, or
//! the smaller one is a scalar / a trailing suffix of the larger shape (the
//! leading-batch case, e.g. adding a `(n,)` bias to `(m, n)` activations).

use super::{numel, NodeId, Op, Tape};
use crate::error::{CcnpError, Result};

fn suffix_index(big_len: usize, small_len: usize) -> impl Fn(usize) -> usize {
    debug_assert!(big_len % small_len == 0);
    move |i| i % small_len
}

/// Validate a broadcast pair; returns true when `small` maps onto `big` by
/// trailing-suffix (or scalar) broadcast.
fn broadcastable(big: &[usize], small: &[usize]) -> bool {
    if numel(small) == 1 {
        return true;
    }
    small.len() <= big.len() && big[big.len() - small.len()..] == *small
}

pub(crate) fn stable_softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row view of a rank-1 or rank-2 tensor: (rows, cols).
fn as_rows(shape: &[usize]) -> (usize, usize) {
    match shape.len() {
        1 => (1, shape[0]),
        2 => (shape[0], shape[1]),
        _ => panic!("expected rank 1 or 2, got {shape:?}"),
    }
}

impl Tape {
    fn binary(
        &mut self,
        op_name: &'static str,
        a: NodeId,
        b: NodeId,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<NodeId> {
        let (sa, sb) = (self.nodes[a].shape.clone(), self.nodes[b].shape.clone());
        let (na, nb) = (numel(&sa), numel(&sb));
        let (out_shape, swap) = if na >= nb {
            if !broadcastable(&sa, &sb) {
                return Err(CcnpError::ShapeMismatch {
                    op: op_name,
                    lhs: sa,
                    rhs: sb,
                });
            }
            (sa.clone(), false)
        } else {
            if !broadcastable(&sb, &sa) {
                return Err(CcnpError::ShapeMismatch {
                    op: op_name,
                    lhs: sa,
                    rhs: sb,
                });
            }
            (sb.clone(), true)
        };
        let n = numel(&out_shape);
        let mut data = Vec::with_capacity(n);
        {
            let da = &self.nodes[a].data;
            let db = &self.nodes[b].data;
            if !swap {
                let ib = suffix_index(na, nb);
                for i in 0..n {
                    data.push(f(da[i], db[ib(i)]));
                }
            } else {
                let ia = suffix_index(nb, na);
                for i in 0..n {
                    data.push(f(da[ia(i)], db[i]));
                }
            }
        }
        let rg = self.nodes[a].requires_grad || self.nodes[b].requires_grad;
        let id = self.push(op, out_shape, data, rg, None);
        self.check_finite(id, op_name)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary("div", a, b, Op::Div(a, b), |x, y| x / y)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let sa = self.nodes[a].shape.clone();
        let sb = self.nodes[b].shape.clone();
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(CcnpError::ShapeMismatch {
                op: "matmul",
                lhs: sa,
                rhs: sb,
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        {
            let da = &self.nodes[a].data;
            let db = &self.nodes[b].data;
            for i in 0..m {
                for p in 0..k {
                    let aip = da[i * k + p];
                    if aip == 0.0 {
                        continue;
                    }
                    let brow = &db[p * n..(p + 1) * n];
                    let orow = &mut out[i * n..(i + 1) * n];
                    for j in 0..n {
                        orow[j] += aip * brow[j];
                    }
                }
            }
        }
        let rg = self.nodes[a].requires_grad || self.nodes[b].requires_grad;
        let id = self.push(Op::Matmul(a, b), vec![m, n], out, rg, None);
        self.check_finite(id, "matmul")
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let sa = self.nodes[a].shape.clone();
        if sa.len() != 2 {
            return Err(CcnpError::InvalidShape {
                op: "transpose",
                shape: sa,
                detail: "rank-2 required".into(),
            });
        }
        let (m, n) = (sa[0], sa[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.nodes[a].data[i * n + j];
            }
        }
        let rg = self.nodes[a].requires_grad;
        Ok(self.push(Op::Transpose(a), vec![n, m], out, rg, None))
    }

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        if numel(&shape) != self.nodes[a].data.len() {
            return Err(CcnpError::InvalidShape {
                op: "reshape",
                shape,
                detail: format!("element count differs from {:?}", self.nodes[a].shape),
            });
        }
        let data = self.nodes[a].data.clone();
        let rg = self.nodes[a].requires_grad;
        Ok(self.push(Op::Reshape(a), shape, data, rg, None))
    }

    /// Concatenate rank-1 tensors (axis 0) or rank-2 tensors along rows
    /// (axis 0) or columns (axis 1).
    pub fn concat(&mut self, inputs: &[NodeId], axis: usize) -> Result<NodeId> {
        if inputs.is_empty() {
            return Err(CcnpError::InvalidShape {
                op: "concat",
                shape: vec![],
                detail: "empty input list".into(),
            });
        }
        let rank = self.nodes[inputs[0]].shape.len();
        if axis >= rank.max(1) {
            return Err(CcnpError::InvalidShape {
                op: "concat",
                shape: self.nodes[inputs[0]].shape.clone(),
                detail: format!("axis {axis} out of range"),
            });
        }
        for &i in inputs {
            let s = &self.nodes[i].shape;
            if s.len() != rank {
                return Err(CcnpError::ShapeMismatch {
                    op: "concat",
                    lhs: self.nodes[inputs[0]].shape.clone(),
                    rhs: s.clone(),
                });
            }
            for d in 0..rank {
                if d != axis && s[d] != self.nodes[inputs[0]].shape[d] {
                    return Err(CcnpError::ShapeMismatch {
                        op: "concat",
                        lhs: self.nodes[inputs[0]].shape.clone(),
                        rhs: s.clone(),
                    });
                }
            }
        }
        let (shape, data) = if rank == 1 || (rank == 2 && axis == 0) {
            let mut data = Vec::new();
            let mut total = 0;
            for &i in inputs {
                total += self.nodes[i].shape[axis];
                data.extend_from_slice(&self.nodes[i].data);
            }
            let mut shape = self.nodes[inputs[0]].shape.clone();
            shape[axis] = total;
            (shape, data)
        } else {
            // rank 2, axis 1: interleave rows
            let rows = self.nodes[inputs[0]].shape[0];
            let total_cols: usize = inputs.iter().map(|&i| self.nodes[i].shape[1]).sum();
            let mut data = Vec::with_capacity(rows * total_cols);
            for r in 0..rows {
                for &i in inputs {
                    let c = self.nodes[i].shape[1];
                    data.extend_from_slice(&self.nodes[i].data[r * c..(r + 1) * c]);
                }
            }
            (vec![rows, total_cols], data)
        };
        let rg = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        Ok(self.push(Op::Concat(inputs.to_vec(), axis), shape, data, rg, None))
    }

    fn unary(
        &mut self,
        op_name: &'static str,
        a: NodeId,
        op: Op,
        f: impl Fn(f64) -> f64,
    ) -> Result<NodeId> {
        let data: Vec<f64> = self.nodes[a].data.iter().map(|&x| f(x)).collect();
        let shape = self.nodes[a].shape.clone();
        let rg = self.nodes[a].requires_grad;
        let id = self.push(op, shape, data, rg, None);
        self.check_finite(id, op_name)
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary("relu", a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn softplus(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary("softplus", a, Op::Softplus(a), stable_softplus)
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary("log", a, Op::Log(a), f64::ln)
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary("exp", a, Op::Exp(a), f64::exp)
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary("square", a, Op::Square(a), |x| x * x)
    }

    pub fn sqrt(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary("sqrt", a, Op::Sqrt(a), f64::sqrt)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.unary("scale", a, Op::Scale(a, c), |x| x * c)
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.unary("add_scalar", a, Op::AddScalar(a), |x| x + c)
    }

    fn reduce(
        &mut self,
        op_name: &'static str,
        a: NodeId,
        axis: Option<usize>,
        mean: bool,
    ) -> Result<NodeId> {
        let sa = self.nodes[a].shape.clone();
        let (shape, data) = match axis {
            None => {
                let s: f64 = self.nodes[a].data.iter().sum();
                let n = self.nodes[a].data.len() as f64;
                (vec![1], vec![if mean { s / n } else { s }])
            }
            Some(ax) => {
                if sa.len() != 2 || ax > 1 {
                    return Err(CcnpError::InvalidShape {
                        op: op_name,
                        shape: sa,
                        detail: format!("axis {ax} reduction needs rank-2 input"),
                    });
                }
                let (m, n) = (sa[0], sa[1]);
                let d = &self.nodes[a].data;
                if ax == 0 {
                    let mut out = vec![0.0; n];
                    for r in 0..m {
                        for c in 0..n {
                            out[c] += d[r * n + c];
                        }
                    }
                    if mean {
                        out.iter_mut().for_each(|v| *v /= m as f64);
                    }
                    (vec![n], out)
                } else {
                    let mut out = vec![0.0; m];
                    for r in 0..m {
                        out[r] = d[r * n..(r + 1) * n].iter().sum();
                    }
                    if mean {
                        out.iter_mut().for_each(|v| *v /= n as f64);
                    }
                    (vec![m], out)
                }
            }
        };
        let rg = self.nodes[a].requires_grad;
        let op = if mean { Op::Mean(a, axis) } else { Op::Sum(a, axis) };
        let id = self.push(op, shape, data, rg, None);
        self.check_finite(id, op_name)
    }

    pub fn mean(&mut self, a: NodeId, axis: Option<usize>) -> Result<NodeId> {
        self.reduce("mean", a, axis, true)
    }

    pub fn sum(&mut self, a: NodeId, axis: Option<usize>) -> Result<NodeId> {
        self.reduce("sum", a, axis, false)
    }

    /// Row-wise softmax over the last axis (rank 1 or rank 2).
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let sa = self.nodes[a].shape.clone();
        if sa.is_empty() || sa.len() > 2 {
            return Err(CcnpError::InvalidShape {
                op: "softmax",
                shape: sa,
                detail: "rank 1 or 2 required".into(),
            });
        }
        let (rows, cols) = as_rows(&sa);
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &self.nodes[a].data[r * cols..(r + 1) * cols];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (o, &x) in out[r * cols..(r + 1) * cols].iter_mut().zip(row) {
                *o = (x - mx).exp();
                z += *o;
            }
            for o in &mut out[r * cols..(r + 1) * cols] {
                *o /= z;
            }
        }
        let rg = self.nodes[a].requires_grad;
        let id = self.push(Op::Softmax(a), sa, out, rg, None);
        self.check_finite(id, "softmax")
    }

    /// Pairwise cosine similarity between the rows of `a` (m, d) and the rows
    /// of `b` (n, d), yielding (m, n). Rank-1 inputs are treated as a single
    /// row; two rank-1 inputs yield a scalar.
    pub fn cosine_sim(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let sa = self.nodes[a].shape.clone();
        let sb = self.nodes[b].shape.clone();
        let (m, da) = as_rows(&sa);
        let (n, db) = as_rows(&sb);
        if da != db {
            return Err(CcnpError::ShapeMismatch {
                op: "cosine_sim",
                lhs: sa,
                rhs: sb,
            });
        }
        let d = da;
        let norm = |data: &[f64], r: usize| -> f64 {
            data[r * d..(r + 1) * d].iter().map(|x| x * x).sum::<f64>().sqrt()
        };
        let mut out = vec![0.0; m * n];
        {
            let xa = &self.nodes[a].data;
            let xb = &self.nodes[b].data;
            for i in 0..m {
                let na = norm(xa, i);
                if na == 0.0 {
                    return Err(CcnpError::ZeroNormEmbedding);
                }
                for j in 0..n {
                    let nb = norm(xb, j);
                    if nb == 0.0 {
                        return Err(CcnpError::ZeroNormEmbedding);
                    }
                    let dot: f64 = xa[i * d..(i + 1) * d]
                        .iter()
                        .zip(&xb[j * d..(j + 1) * d])
                        .map(|(x, y)| x * y)
                        .sum();
                    out[i * n + j] = dot / (na * nb);
                }
            }
        }
        let shape = if sa.len() == 1 && sb.len() == 1 {
            vec![1]
        } else {
            vec![m, n]
        };
        let rg = self.nodes[a].requires_grad || self.nodes[b].requires_grad;
        let id = self.push(Op::CosineSim(a, b), shape, out, rg, None);
        self.check_finite(id, "cosine_sim")
    }

    /// Select rows of a rank-2 tensor (or elements of a rank-1 tensor).
    pub fn gather_rows(&mut self, a: NodeId, indices: &[usize]) -> Result<NodeId> {
        let sa = self.nodes[a].shape.clone();
        let (rows, cols) = as_rows(&sa);
        for &i in indices {
            if i >= rows.max(if sa.len() == 1 { cols } else { 0 }) {
                return Err(CcnpError::InvalidShape {
                    op: "gather_rows",
                    shape: sa,
                    detail: format!("index {i} out of range"),
                });
            }
        }
        let (shape, data) = if sa.len() == 1 {
            let d: Vec<f64> = indices.iter().map(|&i| self.nodes[a].data[i]).collect();
            (vec![indices.len()], d)
        } else {
            let mut d = Vec::with_capacity(indices.len() * cols);
            for &i in indices {
                d.extend_from_slice(&self.nodes[a].data[i * cols..(i + 1) * cols]);
            }
            (vec![indices.len(), cols], d)
        };
        let rg = self.nodes[a].requires_grad;
        Ok(self.push(Op::GatherRows(a, indices.to_vec()), shape, data, rg, None))
    }

    /// Backward rule dispatch for one node; `g` is the node's adjoint.
    pub(crate) fn propagate(&self, id: NodeId, g: &[f64], adjoint: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let node = &nodes[id];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.binary_backward(*a, *b, g, adjoint, |_, _| (1.0, 1.0));
            }
            Op::Sub(a, b) => {
                self.binary_backward(*a, *b, g, adjoint, |_, _| (1.0, -1.0));
            }
            Op::Mul(a, b) => {
                self.binary_backward(*a, *b, g, adjoint, |x, y| (y, x));
            }
            Op::Div(a, b) => {
                self.binary_backward(*a, *b, g, adjoint, |x, y| (1.0 / y, -x / (y * y)));
            }
            Op::Matmul(a, b) => {
                let (m, k) = (nodes[*a].shape[0], nodes[*a].shape[1]);
                let n = nodes[*b].shape[1];
                let (da, db) = (&nodes[*a].data, &nodes[*b].data);
                Tape::bump(adjoint, nodes, *a, |buf| {
                    // dA = g @ B^T
                    for i in 0..m {
                        for p in 0..k {
                            let mut acc = 0.0;
                            for j in 0..n {
                                acc += g[i * n + j] * db[p * n + j];
                            }
                            buf[i * k + p] += acc;
                        }
                    }
                });
                Tape::bump(adjoint, nodes, *b, |buf| {
                    // dB = A^T @ g
                    for i in 0..m {
                        for p in 0..k {
                            let aip = da[i * k + p];
                            if aip == 0.0 {
                                continue;
                            }
                            for j in 0..n {
                                buf[p * n + j] += aip * g[i * n + j];
                            }
                        }
                    }
                });
            }
            Op::Transpose(a) => {
                let (m, n) = (nodes[*a].shape[0], nodes[*a].shape[1]);
                Tape::bump(adjoint, nodes, *a, |buf| {
                    for i in 0..m {
                        for j in 0..n {
                            buf[i * n + j] += g[j * m + i];
                        }
                    }
                });
            }
            Op::Reshape(a) => {
                Tape::bump(adjoint, nodes, *a, |buf| {
                    for (b, &gv) in buf.iter_mut().zip(g) {
                        *b += gv;
                    }
                });
            }
            Op::Concat(inputs, axis) => {
                let rank = nodes[inputs[0]].shape.len();
                if rank == 1 || *axis == 0 {
                    let mut offset = 0;
                    for &inp in inputs {
                        let len = nodes[inp].data.len();
                        Tape::bump(adjoint, nodes, inp, |buf| {
                            for (b, &gv) in buf.iter_mut().zip(&g[offset..offset + len]) {
                                *b += gv;
                            }
                        });
                        offset += len;
                    }
                } else {
                    let rows = node.shape[0];
                    let total_cols = node.shape[1];
                    let mut col_off = 0;
                    for &inp in inputs {
                        let c = nodes[inp].shape[1];
                        Tape::bump(adjoint, nodes, inp, |buf| {
                            for r in 0..rows {
                                for j in 0..c {
                                    buf[r * c + j] += g[r * total_cols + col_off + j];
                                }
                            }
                        });
                        col_off += c;
                    }
                }
            }
            Op::Relu(a) => {
                let xa = &nodes[*a].data;
                Tape::bump(adjoint, nodes, *a, |buf| {
                    for i in 0..g.len() {
                        if xa[i] > 0.0 {
                            buf[i] += g[i];
                        }
                    }
                });
            }
            Op::Softplus(a) => {
                let xa = &nodes[*a].data;
                Tape::bump(adjoint, nodes, *a, |buf| {
                    for i in 0..g.len() {
                        buf[i] += g[i] * sigmoid(xa[i]);
                    }
                });
            }
            Op::Mean(a, axis) | Op::Sum(a, axis) => {
                let mean = matches!(node.op, Op::Mean(_, _));
                let sa = &nodes[*a].shape;
                match axis {
                    None => {
                        let n = nodes[*a].data.len() as f64;
                        let w = if mean { g[0] / n } else { g[0] };
                        Tape::bump(adjoint, nodes, *a, |buf| {
                            for b in buf.iter_mut() {
                                *b += w;
                            }
                        });
                    }
                    Some(0) => {
                        let (m, n) = (sa[0], sa[1]);
                        let w = if mean { 1.0 / m as f64 } else { 1.0 };
                        Tape::bump(adjoint, nodes, *a, |buf| {
                            for r in 0..m {
                                for c in 0..n {
                                    buf[r * n + c] += g[c] * w;
                                }
                            }
                        });
                    }
                    Some(_) => {
                        let (m, n) = (sa[0], sa[1]);
                        let w = if mean { 1.0 / n as f64 } else { 1.0 };
                        Tape::bump(adjoint, nodes, *a, |buf| {
                            for r in 0..m {
                                for c in 0..n {
                                    buf[r * n + c] += g[r] * w;
                                }
                            }
                        });
                    }
                }
            }
            Op::Scale(a, c) => {
                let c = *c;
                Tape::bump(adjoint, nodes, *a, |buf| {
                    for i in 0..g.len() {
                        buf[i] += g[i] * c;
                    }
                });
            }
            Op::AddScalar(a) => {
                Tape::bump(adjoint, nodes, *a, |buf| {
                    for i in 0..g.len() {
                        buf[i] += g[i];
                    }
                });
            }
            Op::CosineSim(a, b) => {
                let (m, d) = as_rows(&nodes[*a].shape);
                let (n, _) = as_rows(&nodes[*b].shape);
                let (xa, xb) = (&nodes[*a].data, &nodes[*b].data);
                let out = &node.data;
                let norm = |data: &[f64], r: usize| -> f64 {
                    data[r * d..(r + 1) * d].iter().map(|x| x * x).sum::<f64>().sqrt()
                };
                let norms_a: Vec<f64> = (0..m).map(|i| norm(xa, i)).collect();
                let norms_b: Vec<f64> = (0..n).map(|j| norm(xb, j)).collect();
                Tape::bump(adjoint, nodes, *a, |buf| {
                    for i in 0..m {
                        for j in 0..n {
                            let gij = g[i * n + j];
                            if gij == 0.0 {
                                continue;
                            }
                            let s = out[i * n + j];
                            let inv = 1.0 / (norms_a[i] * norms_b[j]);
                            let inv_a2 = 1.0 / (norms_a[i] * norms_a[i]);
                            for t in 0..d {
                                buf[i * d + t] +=
                                    gij * (xb[j * d + t] * inv - s * xa[i * d + t] * inv_a2);
                            }
                        }
                    }
                });
                Tape::bump(adjoint, nodes, *b, |buf| {
                    for i in 0..m {
                        for j in 0..n {
                            let gij = g[i * n + j];
                            if gij == 0.0 {
                                continue;
                            }
                            let s = out[i * n + j];
                            let inv = 1.0 / (norms_a[i] * norms_b[j]);
                            let inv_b2 = 1.0 / (norms_b[j] * norms_b[j]);
                            for t in 0..d {
                                buf[j * d + t] +=
                                    gij * (xa[i * d + t] * inv - s * xb[j * d + t] * inv_b2);
                            }
                        }
                    }
                });
            }
            Op::Softmax(a) => {
                let (rows, cols) = as_rows(&node.shape);
                let s = &node.data;
                Tape::bump(adjoint, nodes, *a, |buf| {
                    for r in 0..rows {
                        let srow = &s[r * cols..(r + 1) * cols];
                        let grow = &g[r * cols..(r + 1) * cols];
                        let dot: f64 = srow.iter().zip(grow).map(|(x, y)| x * y).sum();
                        for c in 0..cols {
                            buf[r * cols + c] += srow[c] * (grow[c] - dot);
                        }
                    }
                });
            }
            Op::Log(a) => {
                let xa = &nodes[*a].data;
                Tape::bump(adjoint, nodes, *a, |buf| {
                    for i in 0..g.len() {
                        buf[i] += g[i] / xa[i];
                    }
                });
            }
            Op::Exp(a) => {
                let out = &node.data;
                Tape::bump(adjoint, nodes, *a, |buf| {
                    for i in 0..g.len() {
                        buf[i] += g[i] * out[i];
                    }
                });
            }
            Op::Square(a) => {
                let xa = &nodes[*a].data;
                Tape::bump(adjoint, nodes, *a, |buf| {
                    for i in 0..g.len() {
                        buf[i] += 2.0 * xa[i] * g[i];
                    }
                });
            }
            Op::Sqrt(a) => {
                let out = &node.data;
                Tape::bump(adjoint, nodes, *a, |buf| {
                    for i in 0..g.len() {
                        buf[i] += g[i] / (2.0 * out[i]);
                    }
                });
            }
            Op::GatherRows(a, indices) => {
                let sa = &nodes[*a].shape;
                let cols = if sa.len() == 1 { 1 } else { sa[1] };
                Tape::bump(adjoint, nodes, *a, |buf| {
                    for (k, &i) in indices.iter().enumerate() {
                        for c in 0..cols {
                            buf[i * cols + c] += g[k * cols + c];
                        }
                    }
                });
            }
        }
    }

    fn binary_backward(
        &self,
        a: NodeId,
        b: NodeId,
        g: &[f64],
        adjoint: &mut [Option<Vec<f64>>],
        df: impl Fn(f64, f64) -> (f64, f64),
    ) {
        let nodes = &self.nodes;
        let (na, nb) = (nodes[a].data.len(), nodes[b].data.len());
        let (xa, xb) = (&nodes[a].data, &nodes[b].data);
        if na >= nb {
            let ib = suffix_index(na, nb);
            Tape::bump(adjoint, nodes, a, |buf| {
                for i in 0..g.len() {
                    buf[i] += g[i] * df(xa[i], xb[ib(i)]).0;
                }
            });
            Tape::bump(adjoint, nodes, b, |buf| {
                for i in 0..g.len() {
                    buf[ib(i)] += g[i] * df(xa[i], xb[ib(i)]).1;
                }
            });
        } else {
            let ia = suffix_index(nb, na);
            Tape::bump(adjoint, nodes, a, |buf| {
                for i in 0..g.len() {
                    buf[ia(i)] += g[i] * df(xa[ia(i)], xb[i]).0;
                }
            });
            Tape::bump(adjoint, nodes, b, |buf| {
                for i in 0..g.len() {
                    buf[i] += g[i] * df(xa[ia(i)], xb[i]).1;
                }
            });
        }
    }
}
