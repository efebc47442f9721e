//! Define-by-run reverse-mode tape.
//!
//! Every primitive appends one node holding its forward value. Nodes are
//! stored in execution order, so a reverse index sweep is a valid reverse
//! topological order and visits each node once.

use std::sync::atomic::{AtomicU64, Ordering};

use super::tensor::{gemm_acc, gemm_nt_acc, gemm_tn_acc, Tensor};
use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    idx: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Conv1d { x: usize, k: usize, stride: usize },
    RowSoftmax(usize),
    Binary(Elementwise, usize, usize),
    LeakyRelu(usize, f64),
    Scale(usize, f64),
    L2NormRows { x: usize, eps: f64 },
    ConcatRows(Vec<usize>),
    ConcatCols(Vec<usize>),
    Transpose(usize),
    Reshape(usize),
    SliceRows { x: usize, start: usize },
    GatherRows { x: usize, rows: Vec<usize> },
    SumRows(usize),
    Sum(usize),
    Mean(usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Tensor>,
}

#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn check_finite(t: &Tensor, op: &'static str) -> Result<()> {
    if t.all_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(op))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn idx(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.idx >= self.nodes.len() {
            return Err(Error::Autodiff("variable does not belong to this tape".into()));
        }
        Ok(v.idx)
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<Var> {
        check_finite(&value, name)?;
        let requires_grad = match &op {
            Op::Leaf => unreachable!("leaves are pushed directly"),
            Op::MatMul(a, b) | Op::Binary(_, a, b) | Op::Conv1d { x: a, k: b, .. } => {
                self.nodes[*a].requires_grad || self.nodes[*b].requires_grad
            }
            Op::ConcatRows(xs) | Op::ConcatCols(xs) => {
                xs.iter().any(|&i| self.nodes[i].requires_grad)
            }
            Op::RowSoftmax(x)
            | Op::LeakyRelu(x, _)
            | Op::Scale(x, _)
            | Op::L2NormRows { x, .. }
            | Op::Transpose(x)
            | Op::Reshape(x)
            | Op::SliceRows { x, .. }
            | Op::GatherRows { x, .. }
            | Op::SumRows(x)
            | Op::Sum(x)
            | Op::Mean(x) => self.nodes[*x].requires_grad,
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Ok(Var {
            tape: self.id,
            idx: self.nodes.len() - 1,
        })
    }

    /// Records an input. Gradients are accumulated only for leaves created
    /// with `requires_grad`.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<Var> {
        check_finite(&value, "leaf")?;
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            grad: None,
        });
        Ok(Var {
            tape: self.id,
            idx: self.nodes.len() - 1,
        })
    }

    pub fn param(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        assert_eq!(v.tape, self.id, "variable from another tape");
        &self.nodes[v.idx].value
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        assert_eq!(v.tape, self.id, "variable from another tape");
        self.nodes[v.idx].grad.as_ref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let (m, k) = self.nodes[ia].value.dims2()?;
        let (k2, n) = self.nodes[ib].value.dims2()?;
        if k != k2 {
            return Err(Error::Dimension(format!(
                "matmul inner dims differ: {m}×{k} · {k2}×{n}"
            )));
        }
        let mut out = vec![0.0; m * n];
        gemm_acc(
            self.nodes[ia].value.data(),
            self.nodes[ib].value.data(),
            &mut out,
            m,
            k,
            n,
        );
        self.push(Tensor::new([m, n], out)?, Op::MatMul(ia, ib), "matmul")
    }

    /// Valid (unpadded) cross-correlation of `x[cin×T]` with
    /// `kernels[cout×cin×k]`.
    pub fn conv1d(&mut self, x: Var, kernels: Var, stride: usize) -> Result<Var> {
        let (ix, ik) = (self.idx(x)?, self.idx(kernels)?);
        if stride == 0 {
            return Err(Error::Dimension("conv1d stride must be positive".into()));
        }
        let (cin, t) = self.nodes[ix].value.dims2()?;
        let (cout, kcin, klen) = match self.nodes[ik].value.shape()[..] {
            [a, b, c] => (a, b, c),
            _ => {
                return Err(Error::Dimension(format!(
                    "conv1d kernels must be rank 3, got {:?}",
                    self.nodes[ik].value.shape()
                )))
            }
        };
        if kcin != cin {
            return Err(Error::Dimension(format!(
                "conv1d kernel expects {kcin} input channels, input has {cin}"
            )));
        }
        if klen > t {
            return Err(Error::Dimension(format!(
                "conv1d kernel length {klen} exceeds signal length {t}"
            )));
        }
        let tout = (t - klen) / stride + 1;
        let xd = self.nodes[ix].value.data();
        let kd = self.nodes[ik].value.data();
        let mut out = vec![0.0; cout * tout];
        for o in 0..cout {
            let orow = &mut out[o * tout..(o + 1) * tout];
            for c in 0..cin {
                let xrow = &xd[c * t..(c + 1) * t];
                let krow = &kd[(o * cin + c) * klen..(o * cin + c + 1) * klen];
                for (ti, ov) in orow.iter_mut().enumerate() {
                    let base = ti * stride;
                    let acc: f64 = krow
                        .iter()
                        .zip(&xrow[base..base + klen])
                        .map(|(w, v)| w * v)
                        .sum();
                    *ov += acc;
                }
            }
        }
        self.push(
            Tensor::new([cout, tout], out)?,
            Op::Conv1d {
                x: ix,
                k: ik,
                stride,
            },
            "conv1d",
        )
    }

    pub fn row_softmax(&mut self, x: Var) -> Result<Var> {
        let ix = self.idx(x)?;
        let (m, n) = self.nodes[ix].value.dims2()?;
        let xd = self.nodes[ix].value.data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &xd[i * n..(i + 1) * n];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let orow = &mut out[i * n..(i + 1) * n];
            let mut total = 0.0;
            for (o, &v) in orow.iter_mut().zip(row) {
                *o = (v - max).exp();
                total += *o;
            }
            for o in orow.iter_mut() {
                *o /= total;
            }
        }
        self.push(Tensor::new([m, n], out)?, Op::RowSoftmax(ix), "row_softmax")
    }

    /// Elementwise binary op. Shapes must match exactly, or one operand must
    /// hold a single element.
    pub fn binary(&mut self, kind: Elementwise, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let (ta, tb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        let f = |x: f64, y: f64| match kind {
            Elementwise::Add => x + y,
            Elementwise::Sub => x - y,
            Elementwise::Mul => x * y,
        };
        let out = if ta.shape() == tb.shape() {
            let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(ta.shape(), data)?
        } else if tb.is_scalar() {
            let y = tb.data()[0];
            ta.map(|x| f(x, y))
        } else if ta.is_scalar() {
            let x = ta.data()[0];
            tb.map(|y| f(x, y))
        } else {
            return Err(Error::Dimension(format!(
                "incompatible shapes {:?} and {:?}",
                ta.shape(),
                tb.shape()
            )));
        };
        self.push(out, Op::Binary(kind, ia, ib), "elementwise")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Elementwise::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Elementwise::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Elementwise::Mul, a, b)
    }

    /// `x` for positive inputs, `alpha·x` otherwise. The derivative at 0 is `alpha`.
    pub fn leaky_relu(&mut self, x: Var, alpha: f64) -> Result<Var> {
        let ix = self.idx(x)?;
        let out = self.nodes[ix]
            .value
            .map(|v| if v > 0.0 { v } else { alpha * v });
        self.push(out, Op::LeakyRelu(ix, alpha), "leaky_relu")
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let ix = self.idx(x)?;
        let out = self.nodes[ix].value.map(|v| c * v);
        self.push(out, Op::Scale(ix, c), "scale")
    }

    /// Divides each row by its L2 norm; rows with norm below `eps` are divided
    /// by `eps` instead.
    pub fn l2_normalize_rows(&mut self, x: Var, eps: f64) -> Result<Var> {
        let ix = self.idx(x)?;
        if eps.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::Config("l2_normalize_rows eps must be > 0".into()));
        }
        let (m, n) = self.nodes[ix].value.dims2()?;
        let mut out = self.nodes[ix].value.data().to_vec();
        for row in out.chunks_mut(n) {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            let denom = if norm < eps { eps } else { norm };
            row.iter_mut().for_each(|v| *v /= denom);
        }
        self.push(
            Tensor::new([m, n], out)?,
            Op::L2NormRows { x: ix, eps },
            "l2_normalize_rows",
        )
    }

    pub fn concat_rows(&mut self, xs: &[Var]) -> Result<Var> {
        let ids = xs.iter().map(|&v| self.idx(v)).collect::<Result<Vec<_>>>()?;
        let Some(&first) = ids.first() else {
            return Err(Error::Dimension("concat of zero tensors".into()));
        };
        let (_, n) = self.nodes[first].value.dims2()?;
        let mut rows = 0;
        let mut data = Vec::new();
        for &i in &ids {
            let (m, ni) = self.nodes[i].value.dims2()?;
            if ni != n {
                return Err(Error::Dimension(format!(
                    "concat_rows column mismatch: {n} vs {ni}"
                )));
            }
            rows += m;
            data.extend_from_slice(self.nodes[i].value.data());
        }
        self.push(Tensor::new([rows, n], data)?, Op::ConcatRows(ids), "concat_rows")
    }

    pub fn concat_cols(&mut self, xs: &[Var]) -> Result<Var> {
        let ids = xs.iter().map(|&v| self.idx(v)).collect::<Result<Vec<_>>>()?;
        let Some(&first) = ids.first() else {
            return Err(Error::Dimension("concat of zero tensors".into()));
        };
        let (m, _) = self.nodes[first].value.dims2()?;
        let mut widths = Vec::with_capacity(ids.len());
        for &i in &ids {
            let (mi, ni) = self.nodes[i].value.dims2()?;
            if mi != m {
                return Err(Error::Dimension(format!(
                    "concat_cols row mismatch: {m} vs {mi}"
                )));
            }
            widths.push(ni);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(m * total);
        for r in 0..m {
            for (&i, &w) in ids.iter().zip(&widths) {
                data.extend_from_slice(&self.nodes[i].value.data()[r * w..(r + 1) * w]);
            }
        }
        self.push(Tensor::new([m, total], data)?, Op::ConcatCols(ids), "concat_cols")
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let ix = self.idx(x)?;
        let (m, n) = self.nodes[ix].value.dims2()?;
        let xd = self.nodes[ix].value.data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = xd[i * n + j];
            }
        }
        self.push(Tensor::new([n, m], out)?, Op::Transpose(ix), "transpose")
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let ix = self.idx(x)?;
        let out = self.nodes[ix].value.clone().reshaped(shape)?;
        self.push(out, Op::Reshape(ix), "reshape")
    }

    /// Rows `start..end` of a matrix.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let ix = self.idx(x)?;
        let (m, n) = self.nodes[ix].value.dims2()?;
        if start >= end || end > m {
            return Err(Error::Dimension(format!(
                "row slice {start}..{end} out of range for {m} rows"
            )));
        }
        let data = self.nodes[ix].value.data()[start * n..end * n].to_vec();
        self.push(
            Tensor::new([end - start, n], data)?,
            Op::SliceRows { x: ix, start },
            "slice_rows",
        )
    }

    /// Stacks the listed rows (repeats allowed).
    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let ix = self.idx(x)?;
        let (m, n) = self.nodes[ix].value.dims2()?;
        if rows.is_empty() {
            return Err(Error::Dimension("gather of zero rows".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            if r >= m {
                return Err(Error::Dimension(format!("row {r} out of range for {m} rows")));
            }
            data.extend_from_slice(self.nodes[ix].value.row(r));
        }
        self.push(
            Tensor::new([rows.len(), n], data)?,
            Op::GatherRows {
                x: ix,
                rows: rows.to_vec(),
            },
            "gather_rows",
        )
    }

    /// Per-row sums of an `m × n` matrix as an `m × 1` column.
    pub fn sum_rows(&mut self, x: Var) -> Result<Var> {
        let ix = self.idx(x)?;
        let (m, n) = self.nodes[ix].value.dims2()?;
        let data = self.nodes[ix]
            .value
            .data()
            .chunks(n)
            .map(|r| r.iter().sum())
            .collect();
        self.push(Tensor::new([m, 1], data)?, Op::SumRows(ix), "sum_rows")
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let ix = self.idx(x)?;
        let s = self.nodes[ix].value.data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(ix), "sum")
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let ix = self.idx(x)?;
        let t = &self.nodes[ix].value;
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(ix), "mean")
    }

    /// Reverse sweep from a scalar `loss`. Leaf gradients accumulate across
    /// calls until [`Tape::zero_grad`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if loss.tape != self.id {
            return Err(Error::Autodiff("loss was not produced by this tape".into()));
        }
        let root = self.idx(loss)?;
        if !self.nodes[root].value.is_scalar() {
            return Err(Error::Autodiff(format!(
                "loss must be scalar, got shape {:?}",
                self.nodes[root].value.shape()
            )));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; root + 1];
        adj[root] = Some(vec![1.0]);

        for i in (0..=root).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {
                    let node = &mut self.nodes[i];
                    match &mut node.grad {
                        Some(acc) => acc
                            .data_mut()
                            .iter_mut()
                            .zip(&g)
                            .for_each(|(a, d)| *a += d),
                        None => node.grad = Some(Tensor::new(node.value.shape(), g)?),
                    }
                }
                Op::MatMul(a, b) => {
                    let (a, b) = (*a, *b);
                    let (m, k) = self.nodes[a].value.dims2()?;
                    let n = self.nodes[b].value.shape()[1];
                    if self.nodes[a].requires_grad {
                        let da = grad_slot(&mut adj, a, m * k);
                        gemm_nt_acc(&g, self.nodes[b].value.data(), da, m, n, k);
                    }
                    if self.nodes[b].requires_grad {
                        let db = grad_slot(&mut adj, b, k * n);
                        gemm_tn_acc(self.nodes[a].value.data(), &g, db, k, m, n);
                    }
                }
                Op::Conv1d { x, k, stride } => {
                    let (x, k, stride) = (*x, *k, *stride);
                    let (cin, t) = self.nodes[x].value.dims2()?;
                    let kshape = self.nodes[k].value.shape();
                    let (cout, klen) = (kshape[0], kshape[2]);
                    let tout = (t - klen) / stride + 1;
                    let xd = self.nodes[x].value.data();
                    let kd = self.nodes[k].value.data();
                    if self.nodes[x].requires_grad {
                        let dx = grad_slot(&mut adj, x, cin * t);
                        for o in 0..cout {
                            for c in 0..cin {
                                let krow = &kd[(o * cin + c) * klen..(o * cin + c + 1) * klen];
                                let dxrow = &mut dx[c * t..(c + 1) * t];
                                for ti in 0..tout {
                                    let go = g[o * tout + ti];
                                    let base = ti * stride;
                                    for (d, &w) in dxrow[base..base + klen].iter_mut().zip(krow) {
                                        *d += w * go;
                                    }
                                }
                            }
                        }
                    }
                    if self.nodes[k].requires_grad {
                        let dk = grad_slot(&mut adj, k, cout * cin * klen);
                        for o in 0..cout {
                            for c in 0..cin {
                                let xrow = &xd[c * t..(c + 1) * t];
                                let dkrow =
                                    &mut dk[(o * cin + c) * klen..(o * cin + c + 1) * klen];
                                for ti in 0..tout {
                                    let go = g[o * tout + ti];
                                    let base = ti * stride;
                                    for (d, &v) in dkrow.iter_mut().zip(&xrow[base..base + klen]) {
                                        *d += v * go;
                                    }
                                }
                            }
                        }
                    }
                }
                Op::RowSoftmax(x) => {
                    let x = *x;
                    let (_, n) = node.value.dims2()?;
                    let y = node.value.data();
                    let mut dx = vec![0.0; g.len()];
                    for ((yr, gr), dr) in y.chunks(n).zip(g.chunks(n)).zip(dx.chunks_mut(n)) {
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for ((d, &yv), &gv) in dr.iter_mut().zip(yr).zip(gr) {
                            *d = yv * (gv - dot);
                        }
                    }
                    accumulate(&mut adj, x, &dx);
                }
                Op::Binary(kind, a, b) => {
                    let (kind, a, b) = (*kind, *a, *b);
                    let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
                    let (la, lb) = (va.len(), vb.len());
                    let pick = |t: &Tensor, i: usize| {
                        if t.len() == 1 {
                            t.data()[0]
                        } else {
                            t.data()[i]
                        }
                    };
                    let mut da = vec![0.0; la];
                    let mut db = vec![0.0; lb];
                    for (i, &gi) in g.iter().enumerate() {
                        let (ga, gb) = match kind {
                            Elementwise::Add => (gi, gi),
                            Elementwise::Sub => (gi, -gi),
                            Elementwise::Mul => (gi * pick(vb, i), gi * pick(va, i)),
                        };
                        da[if la == 1 { 0 } else { i }] += ga;
                        db[if lb == 1 { 0 } else { i }] += gb;
                    }
                    if self.nodes[a].requires_grad {
                        accumulate(&mut adj, a, &da);
                    }
                    if self.nodes[b].requires_grad {
                        accumulate(&mut adj, b, &db);
                    }
                }
                Op::LeakyRelu(x, alpha) => {
                    let (x, alpha) = (*x, *alpha);
                    let dx: Vec<f64> = self.nodes[x]
                        .value
                        .data()
                        .iter()
                        .zip(&g)
                        .map(|(&v, &gv)| if v > 0.0 { gv } else { alpha * gv })
                        .collect();
                    accumulate(&mut adj, x, &dx);
                }
                Op::Scale(x, c) => {
                    let (x, c) = (*x, *c);
                    let dx: Vec<f64> = g.iter().map(|v| v * c).collect();
                    accumulate(&mut adj, x, &dx);
                }
                Op::L2NormRows { x, eps } => {
                    let (x, eps) = (*x, *eps);
                    let (_, n) = node.value.dims2()?;
                    let xin = self.nodes[x].value.data();
                    let y = node.value.data();
                    let mut dx = vec![0.0; g.len()];
                    for (((xr, yr), gr), dr) in xin
                        .chunks(n)
                        .zip(y.chunks(n))
                        .zip(g.chunks(n))
                        .zip(dx.chunks_mut(n))
                    {
                        let norm = xr.iter().map(|v| v * v).sum::<f64>().sqrt();
                        if norm < eps {
                            for (d, &gv) in dr.iter_mut().zip(gr) {
                                *d = gv / eps;
                            }
                        } else {
                            let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                            for ((d, &yv), &gv) in dr.iter_mut().zip(yr).zip(gr) {
                                *d = (gv - yv * dot) / norm;
                            }
                        }
                    }
                    accumulate(&mut adj, x, &dx);
                }
                Op::ConcatRows(ids) => {
                    let ids = ids.clone();
                    let mut offset = 0;
                    for i in ids {
                        let len = self.nodes[i].value.len();
                        if self.nodes[i].requires_grad {
                            accumulate(&mut adj, i, &g[offset..offset + len]);
                        }
                        offset += len;
                    }
                }
                Op::ConcatCols(ids) => {
                    let ids = ids.clone();
                    let (m, total) = node.value.dims2()?;
                    let mut col = 0;
                    for i in ids {
                        let w = self.nodes[i].value.shape()[1];
                        if self.nodes[i].requires_grad {
                            let mut part = Vec::with_capacity(m * w);
                            for r in 0..m {
                                part.extend_from_slice(&g[r * total + col..r * total + col + w]);
                            }
                            accumulate(&mut adj, i, &part);
                        }
                        col += w;
                    }
                }
                Op::Transpose(x) => {
                    let x = *x;
                    let (m, n) = self.nodes[x].value.dims2()?;
                    let mut dx = vec![0.0; m * n];
                    for i in 0..m {
                        for j in 0..n {
                            dx[i * n + j] = g[j * m + i];
                        }
                    }
                    accumulate(&mut adj, x, &dx);
                }
                Op::Reshape(x) => {
                    let x = *x;
                    accumulate(&mut adj, x, &g);
                }
                Op::SliceRows { x, start } => {
                    let (x, start) = (*x, *start);
                    let n = self.nodes[x].value.shape()[1];
                    let total = self.nodes[x].value.len();
                    let dx = grad_slot(&mut adj, x, total);
                    for (d, &gv) in dx[start * n..start * n + g.len()].iter_mut().zip(&g) {
                        *d += gv;
                    }
                }
                Op::GatherRows { x, rows } => {
                    let x = *x;
                    let rows = rows.clone();
                    let n = self.nodes[x].value.shape()[1];
                    let total = self.nodes[x].value.len();
                    let dx = grad_slot(&mut adj, x, total);
                    for (k, r) in rows.into_iter().enumerate() {
                        for (d, &gv) in dx[r * n..(r + 1) * n].iter_mut().zip(&g[k * n..(k + 1) * n]) {
                            *d += gv;
                        }
                    }
                }
                Op::SumRows(x) => {
                    let x = *x;
                    let (_, n) = self.nodes[x].value.dims2()?;
                    let dx: Vec<f64> = g.iter().flat_map(|&gv| std::iter::repeat_n(gv, n)).collect();
                    accumulate(&mut adj, x, &dx);
                }
                Op::Sum(x) => {
                    let x = *x;
                    let dx = vec![g[0]; self.nodes[x].value.len()];
                    accumulate(&mut adj, x, &dx);
                }
                Op::Mean(x) => {
                    let x = *x;
                    let len = self.nodes[x].value.len();
                    let dx = vec![g[0] / len as f64; len];
                    accumulate(&mut adj, x, &dx);
                }
            }
        }
        Ok(())
    }
}

fn grad_slot(adj: &mut [Option<Vec<f64>>], i: usize, len: usize) -> &mut [f64] {
    adj[i].get_or_insert_with(|| vec![0.0; len])
}

fn accumulate(adj: &mut [Option<Vec<f64>>], i: usize, d: &[f64]) {
    match &mut adj[i] {
        Some(acc) => acc.iter_mut().zip(d).for_each(|(a, v)| *a += v),
        slot @ None => *slot = Some(d.to_vec()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_by_identity() {
        let mut tape = Tape::new();
        let x = mat(&[&[1.5, -2.0, 3.0], &[0.25, 4.0, -1.0]]);
        let i = tape.constant(Tensor::eye(2)).unwrap();
        let xv = tape.constant(x.clone()).unwrap();
        let y = tape.matmul(i, xv).unwrap();
        assert_eq!(tape.value(y), &x);
    }

    #[test]
    fn matmul_hand_checked() {
        let mut tape = Tape::new();
        let a = tape.constant(mat(&[&[1.0, 2.0], &[3.0, 4.0]])).unwrap();
        let b = tape.constant(mat(&[&[1.0], &[1.0]])).unwrap();
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros([2, 3])).unwrap();
        let b = tape.constant(Tensor::zeros([2, 3])).unwrap();
        assert!(matches!(tape.matmul(a, b), Err(Error::Dimension(_))));
    }

    #[test]
    fn conv1d_identity_and_stride() {
        let mut tape = Tape::new();
        let x = tape.constant(mat(&[&[1.0, 2.0, 3.0, 4.0]])).unwrap();
        let k1 = tape.constant(Tensor::new([1, 1, 1], vec![1.0]).unwrap()).unwrap();
        let y = tape.conv1d(x, k1, 1).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, 2.0, 3.0, 4.0]);

        let k2 = tape.constant(Tensor::new([1, 1, 2], vec![1.0, 1.0]).unwrap()).unwrap();
        let y = tape.conv1d(x, k2, 2).unwrap();
        assert_eq!(tape.value(y).data(), &[3.0, 7.0]);
    }

    #[test]
    fn conv1d_kernel_too_long() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros([1, 3])).unwrap();
        let k = tape.constant(Tensor::zeros([1, 1, 4])).unwrap();
        assert!(matches!(tape.conv1d(x, k, 1), Err(Error::Dimension(_))));
    }

    #[test]
    fn softmax_closed_forms() {
        let mut tape = Tape::new();
        let x = tape
            .constant(mat(&[&[2.0, 2.0, 2.0, 2.0], &[0.0, 3f64.ln(), 0.0, 0.0]]))
            .unwrap();
        // second row: [1, 3, 1, 1] / 6; check the two-element case separately
        let y = tape.row_softmax(x).unwrap();
        for &v in tape.value(y).row(0) {
            assert!((v - 0.25).abs() < 1e-15);
        }
        let x2 = tape.constant(mat(&[&[0.0, 3f64.ln()]])).unwrap();
        let y2 = tape.row_softmax(x2).unwrap();
        let r = tape.value(y2).row(0);
        assert!((r[0] - 0.25).abs() < 1e-15 && (r[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let mut tape = Tape::new();
        let x = tape.constant(mat(&[&[1000.0, 1000.0]])).unwrap();
        let y = tape.row_softmax(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.5, 0.5]);
    }

    #[test]
    fn elementwise_definitions() {
        let mut tape = Tape::new();
        let x = tape.constant(mat(&[&[1.0, -2.0]])).unwrap();
        let zero = tape.constant(Tensor::scalar(0.0)).unwrap();
        let y = tape.add(x, zero).unwrap();
        assert_eq!(tape.value(y), tape.value(x));

        let y = tape.leaky_relu(x, 0.2).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, -0.4]);

        let bad = tape.constant(Tensor::zeros([2, 1])).unwrap();
        assert!(tape.add(x, bad).is_err());
    }

    #[test]
    fn l2_normalize_cases() {
        let mut tape = Tape::new();
        let x = tape.constant(mat(&[&[3.0, 4.0], &[0.6, 0.8], &[0.0, 0.0]])).unwrap();
        let y = tape.l2_normalize_rows(x, 1e-12).unwrap();
        let v = tape.value(y);
        assert!((v.at2(0, 0) - 0.6).abs() < 1e-15 && (v.at2(0, 1) - 0.8).abs() < 1e-15);
        assert!((v.at2(1, 0) - 0.6).abs() < 1e-12 && (v.at2(1, 1) - 0.8).abs() < 1e-12);
        assert_eq!(v.row(2), &[0.0, 0.0]);
    }

    #[test]
    fn concat_shapes_and_slices() {
        let mut tape = Tape::new();
        let a = tape.constant(mat(&[&[1.0, 2.0]])).unwrap();
        let b = tape.constant(mat(&[&[3.0, 4.0, 5.0]])).unwrap();
        let single = tape.concat_rows(&[a]).unwrap();
        assert_eq!(tape.value(single), tape.value(a));
        let c = tape.concat_cols(&[a, b]).unwrap();
        assert_eq!(tape.value(c).shape(), &[1, 5]);
        assert!(tape.concat_rows(&[a, b]).is_err());

        let r1 = tape.constant(mat(&[&[1.0, 2.0], &[3.0, 4.0]])).unwrap();
        let r2 = tape.constant(mat(&[&[5.0, 6.0]])).unwrap();
        let cat = tape.concat_rows(&[r1, r2]).unwrap();
        let s1 = tape.slice_rows(cat, 0, 2).unwrap();
        let s2 = tape.slice_rows(cat, 2, 3).unwrap();
        assert_eq!(tape.value(s1), tape.value(r1));
        assert_eq!(tape.value(s2), tape.value(r2));
    }

    #[test]
    fn backward_closed_forms() {
        let mut tape = Tape::new();
        let xv = mat(&[&[1.0, -2.0, 0.5]]);
        let x = tape.param(xv.clone()).unwrap();
        let s = tape.sum(x).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[1.0, 1.0, 1.0]);

        let mut tape = Tape::new();
        let x = tape.param(xv.clone()).unwrap();
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq).unwrap();
        tape.backward(s).unwrap();
        let want: Vec<f64> = xv.data().iter().map(|v| 2.0 * v).collect();
        assert_eq!(tape.grad(x).unwrap().data(), &want[..]);
    }

    #[test]
    fn backward_accumulates_across_calls() {
        let mut tape = Tape::new();
        let x = tape.param(mat(&[&[1.0, 2.0]])).unwrap();
        let s = tape.sum(x).unwrap();
        tape.backward(s).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[2.0, 2.0]);
        tape.zero_grad();
        assert!(tape.grad(x).is_none());
    }

    #[test]
    fn diamond_graph_sums_both_paths() {
        // f = sum((x*x) + 3x) with the shared node x*x used twice: g = u + u, u = x*x
        let mut tape = Tape::new();
        let x = tape.param(mat(&[&[1.5, -0.5]])).unwrap();
        let u = tape.mul(x, x).unwrap();
        let g = tape.add(u, u).unwrap();
        let s = tape.sum(g).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[6.0, -2.0]);
    }

    #[test]
    fn backward_errors() {
        let mut tape = Tape::new();
        let x = tape.param(mat(&[&[1.0, 2.0]])).unwrap();
        assert!(matches!(tape.backward(x), Err(Error::Autodiff(_))));

        let mut other = Tape::new();
        let y = other.param(Tensor::scalar(1.0)).unwrap();
        assert!(matches!(tape.backward(y), Err(Error::Autodiff(_))));
    }

    #[test]
    fn non_finite_is_an_error() {
        let mut tape = Tape::new();
        assert!(tape.constant(Tensor::scalar(f64::NAN)).is_err());
        let x = tape.constant(Tensor::scalar(1e300)).unwrap();
        assert!(matches!(tape.mul(x, x), Err(Error::NonFinite(_))));
    }
}
