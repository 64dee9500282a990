use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numerics::tensor::{gemm, gemm_at, gemm_bt, softmax_in_place};
use crate::numerics::{ParamId, ParamStore, Tensor};

const RMS_EPS: f64 = 1e-8;

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulBt(Var, Var),
    Add(Var, Var),
    AddN(Vec<Var>),
    /// matrix plus a broadcast `1 × n` row
    AddRow(Var, Var),
    Mul(Var, Var),
    /// matrix scaled row-wise by an `m × 1` column
    MulCol(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    SoftmaxRows(Var),
    RmsNormRows(Var),
    Gather(Var, Vec<usize>),
    SliceRows(Var, usize, usize),
    SliceCols(Var, usize, usize),
    ConcatCols(Vec<Var>),
    MeanRows(Var, Vec<usize>),
    Sum(Var),
    CrossEntropy { logits: Var, targets: Vec<usize> },
    ConcatRows(Vec<Var>),
    Bce { probs: Var, labels: Vec<f64>, eps: f64 },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    /// Cached intermediate needed by backward (softmax of the logits for
    /// cross-entropy).
    aux: Option<Tensor>,
}

/// Records primitive operations so that a backward pass can replay them in
/// exact reverse order.
///
/// Parameters enter the tape by value through [`Tape::param`]; gradients flow
/// back into the owning [`ParamStore`] only when [`Tape::backward`] is called
/// with it. Anything entered through [`Tape::input`] is a constant leaf.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

/// Gradients of every recorded node with respect to one scalar loss.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn finite(value: Tensor, op: &'static str) -> Result<Tensor> {
    if value.all_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite(op))
    }
}

fn mat(rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
    Tensor::matrix(rows, cols, data).expect("internal shape bookkeeping")
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            op,
            aux: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Tensor) -> Result<Var> {
        let value = finite(value, "input")?;
        Ok(self.push(value, Op::Input))
    }

    /// Brings a parameter onto the tape. Repeated calls for the same id return
    /// the same node so gradients are accumulated once.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param(id));
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        if tb.rows() != k {
            return Err(mismatch("matmul", ta, tb));
        }
        let out = finite(mat(m, n, gemm(ta.data(), tb.data(), m, k, n)), "matmul")?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k, n) = (ta.rows(), ta.cols(), tb.rows());
        if tb.cols() != k {
            return Err(mismatch("matmul_bt", ta, tb));
        }
        let out = finite(mat(m, n, gemm_bt(ta.data(), tb.data(), m, k, n)), "matmul_bt")?;
        Ok(self.push(out, Op::MatMulBt(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.as_matrix_shape() != tb.as_matrix_shape() {
            return Err(mismatch("add", ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let out = finite(mat(ta.rows(), ta.cols(), data), "add")?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn add_n(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(Error::Empty("add_n"))?;
        let mut acc = self.value(*first).clone();
        for &p in &parts[1..] {
            let t = self.value(p);
            if t.as_matrix_shape() != acc.as_matrix_shape() {
                return Err(mismatch("add_n", &acc, t));
            }
            acc.add_assign(t);
        }
        let acc = finite(mat(acc.rows(), acc.cols(), acc.into_data()), "add_n")?;
        Ok(self.push(acc, Op::AddN(parts.to_vec())))
    }

    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (tx, tr) = (self.value(x), self.value(row));
        if tr.rows() != 1 || tr.cols() != tx.cols() {
            return Err(mismatch("add_row", tx, tr));
        }
        let n = tx.cols();
        let data = tx
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v + tr.data()[i % n])
            .collect();
        let out = finite(mat(tx.rows(), n, data), "add_row")?;
        Ok(self.push(out, Op::AddRow(x, row)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.as_matrix_shape() != tb.as_matrix_shape() {
            return Err(mismatch("mul", ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let out = finite(mat(ta.rows(), ta.cols(), data), "mul")?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn mul_col(&mut self, x: Var, col: Var) -> Result<Var> {
        let (tx, tc) = (self.value(x), self.value(col));
        if tc.cols() != 1 || tc.rows() != tx.rows() {
            return Err(mismatch("mul_col", tx, tc));
        }
        let n = tx.cols();
        let data = tx
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v * tc.data()[i / n])
            .collect();
        let out = finite(mat(tx.rows(), n, data), "mul_col")?;
        Ok(self.push(out, Op::MulCol(x, col)))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        let t = self.value(x);
        let out = finite(mat(t.rows(), t.cols(), t.map(|v| v * s).into_data()), "scale")?;
        Ok(self.push(out, Op::Scale(x, s)))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let out = mat(t.rows(), t.cols(), t.map(|v| v.max(0.0)).into_data());
        self.push(out, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let out = mat(t.rows(), t.cols(), t.map(sigmoid).into_data());
        self.push(out, Op::Sigmoid(x))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let n = t.cols();
        let mut data = t.data().to_vec();
        for row in data.chunks_mut(n) {
            softmax_in_place(row);
        }
        let out = mat(t.rows(), n, data);
        self.push(out, Op::SoftmaxRows(x))
    }

    /// Scales each row to unit root-mean-square (no learned gain).
    pub fn rms_norm_rows(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let n = t.cols();
        let mut data = t.data().to_vec();
        for row in data.chunks_mut(n) {
            let r = (row.iter().map(|v| v * v).sum::<f64>() / n as f64 + RMS_EPS).sqrt();
            row.iter_mut().for_each(|v| *v /= r);
        }
        let out = mat(t.rows(), n, data);
        self.push(out, Op::RmsNormRows(x))
    }

    /// Row lookup: output row `r` is `table[indices[r]]`.
    pub fn gather(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let t = self.value(table);
        if indices.is_empty() {
            return Err(Error::Empty("gather indices"));
        }
        let n = t.cols();
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            if i >= t.rows() {
                return Err(Error::OutOfRange {
                    what: "embedding table",
                    index: i,
                    size: t.rows(),
                });
            }
            data.extend_from_slice(t.row(i));
        }
        let out = mat(indices.len(), n, data);
        Ok(self.push(out, Op::Gather(table, indices.to_vec())))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        if len == 0 || start + len > t.rows() {
            return Err(Error::OutOfRange {
                what: "row slice",
                index: start + len,
                size: t.rows(),
            });
        }
        let n = t.cols();
        let out = mat(len, n, t.data()[start * n..(start + len) * n].to_vec());
        Ok(self.push(out, Op::SliceRows(x, start, len)))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        if len == 0 || start + len > t.cols() {
            return Err(Error::OutOfRange {
                what: "column slice",
                index: start + len,
                size: t.cols(),
            });
        }
        let data = (0..t.rows())
            .flat_map(|r| t.row(r)[start..start + len].iter().copied())
            .collect();
        let out = mat(t.rows(), len, data);
        Ok(self.push(out, Op::SliceCols(x, start, len)))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(Error::Empty("concat_cols"))?;
        let rows = self.value(*first).rows();
        let mut cols = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows() != rows {
                return Err(mismatch("concat_cols", self.value(*first), t));
            }
            cols += t.cols();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = mat(rows, cols, data);
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(Error::Empty("concat_rows"))?;
        let cols = self.value(*first).cols();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != cols {
                return Err(mismatch("concat_rows", self.value(*first), t));
            }
            rows += t.rows();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let out = mat(rows, cols, data);
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    /// Mean of the selected rows, as a `1 × n` row.
    pub fn mean_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let t = self.value(x);
        if rows.is_empty() {
            return Err(Error::Empty("mean_rows"));
        }
        let n = t.cols();
        let mut acc = vec![0.0; n];
        for &r in rows {
            if r >= t.rows() {
                return Err(Error::OutOfRange {
                    what: "pooled row",
                    index: r,
                    size: t.rows(),
                });
            }
            for (a, v) in acc.iter_mut().zip(t.row(r)) {
                *a += v;
            }
        }
        let inv = 1.0 / rows.len() as f64;
        acc.iter_mut().for_each(|a| *a *= inv);
        let out = mat(1, n, acc);
        Ok(self.push(out, Op::MeanRows(x, rows.to_vec())))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// `−log softmax(logits)[target]` for a single `1 × N` logit row.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        if self.value(logits).rows() != 1 {
            return Err(Error::invalid("cross_entropy expects a single logit row"));
        }
        self.cross_entropy_rows(logits, &[target])
    }

    /// Mean over rows of `−log softmax(logits[r])[targets[r]]`.
    pub fn cross_entropy_rows(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let t = self.value(logits);
        if t.rows() != targets.len() {
            return Err(Error::ShapeMismatch {
                op: "cross_entropy",
                left: t.shape().to_vec(),
                right: vec![targets.len()],
            });
        }
        let n = t.cols();
        let mut probs = t.data().to_vec();
        let mut loss = 0.0;
        for (row, &target) in probs.chunks_mut(n).zip(targets) {
            if target >= n {
                return Err(Error::OutOfRange {
                    what: "cross-entropy target",
                    index: target,
                    size: n,
                });
            }
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[target];
            softmax_in_place(row);
        }
        let m = targets.len();
        let loss = finite(Tensor::scalar(loss / m as f64), "cross_entropy")?;
        let v = self.push(
            loss,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
            },
        );
        self.nodes[v.0].aux = Some(mat(m, n, probs));
        Ok(v)
    }

    /// Summed binary cross-entropy of probabilities against 0/1 labels, with
    /// probabilities clamped to `[eps, 1 − eps]`.
    pub fn bce(&mut self, probs: Var, labels: &[f64], eps: f64) -> Result<Var> {
        let t = self.value(probs);
        if t.len() != labels.len() {
            return Err(Error::ShapeMismatch {
                op: "bce",
                left: t.shape().to_vec(),
                right: vec![labels.len()],
            });
        }
        let loss: f64 = t
            .data()
            .iter()
            .zip(labels)
            .map(|(&p, &y)| {
                let p = p.clamp(eps, 1.0 - eps);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum();
        let out = finite(Tensor::scalar(loss), "bce")?;
        Ok(self.push(
            out,
            Op::Bce {
                probs,
                labels: labels.to_vec(),
                eps,
            },
        ))
    }

    /// Reverse pass from a scalar `loss`. Parameter gradients are added into
    /// `store`; gradients of every node are returned for inspection.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NotScalar(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(lv.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            self.propagate(node, &g, &mut grads)?;
            if let Op::Param(id) = node.op {
                let acc = store.grad_mut(id);
                if acc.len() != g.len() {
                    return Err(mismatch("param grad", acc, &g));
                }
                acc.add_assign(&g);
                if !acc.all_finite() {
                    return Err(Error::NonFinite("gradient"));
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let acc = |grads: &mut [Option<Tensor>], v: Var, delta: Tensor| {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        let val = |v: Var| &self.nodes[v.0].value;
        let shaped = |like: Var, data: Vec<f64>| {
            let t = val(like);
            Tensor::new(t.shape().to_vec(), data).expect("gradient matches value shape")
        };

        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                let da = gemm_bt(g.data(), tb.data(), m, n, k);
                let db = gemm_at(ta.data(), g.data(), m, k, n);
                acc(grads, *a, shaped(*a, da));
                acc(grads, *b, shaped(*b, db));
            }
            Op::MatMulBt(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.rows());
                let da = gemm(g.data(), tb.data(), m, n, k);
                let db = gemm_at(g.data(), ta.data(), m, n, k);
                acc(grads, *a, shaped(*a, da));
                acc(grads, *b, shaped(*b, db));
            }
            Op::Add(a, b) => {
                acc(grads, *a, shaped(*a, g.data().to_vec()));
                acc(grads, *b, shaped(*b, g.data().to_vec()));
            }
            Op::AddN(parts) => {
                for &p in parts {
                    acc(grads, p, shaped(p, g.data().to_vec()));
                }
            }
            Op::AddRow(x, row) => {
                let n = g.cols();
                let mut dr = vec![0.0; n];
                for (i, v) in g.data().iter().enumerate() {
                    dr[i % n] += v;
                }
                acc(grads, *x, shaped(*x, g.data().to_vec()));
                acc(grads, *row, shaped(*row, dr));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let da = g.data().iter().zip(tb.data()).map(|(g, y)| g * y).collect();
                let db = g.data().iter().zip(ta.data()).map(|(g, x)| g * x).collect();
                acc(grads, *a, shaped(*a, da));
                acc(grads, *b, shaped(*b, db));
            }
            Op::MulCol(x, col) => {
                let (tx, tc) = (val(*x), val(*col));
                let n = tx.cols();
                let mut dx = vec![0.0; tx.len()];
                let mut dc = vec![0.0; tc.len()];
                for (i, gv) in g.data().iter().enumerate() {
                    dx[i] = gv * tc.data()[i / n];
                    dc[i / n] += gv * tx.data()[i];
                }
                acc(grads, *x, shaped(*x, dx));
                acc(grads, *col, shaped(*col, dc));
            }
            Op::Scale(x, s) => {
                acc(grads, *x, shaped(*x, g.data().iter().map(|v| v * s).collect()));
            }
            Op::Relu(x) => {
                let d = g
                    .data()
                    .iter()
                    .zip(node.value.data())
                    .map(|(g, y)| if *y > 0.0 { *g } else { 0.0 })
                    .collect();
                acc(grads, *x, shaped(*x, d));
            }
            Op::Sigmoid(x) => {
                let d = g
                    .data()
                    .iter()
                    .zip(node.value.data())
                    .map(|(g, y)| g * y * (1.0 - y))
                    .collect();
                acc(grads, *x, shaped(*x, d));
            }
            Op::SoftmaxRows(x) => {
                let n = node.value.cols();
                let mut d = Vec::with_capacity(node.value.len());
                for (grow, yrow) in g.data().chunks(n).zip(node.value.data().chunks(n)) {
                    let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                    d.extend(grow.iter().zip(yrow).map(|(gv, y)| y * (gv - dot)));
                }
                acc(grads, *x, shaped(*x, d));
            }
            Op::RmsNormRows(x) => {
                let t = val(*x);
                let n = t.cols();
                let mut d = Vec::with_capacity(t.len());
                for ((grow, yrow), xrow) in g
                    .data()
                    .chunks(n)
                    .zip(node.value.data().chunks(n))
                    .zip(t.data().chunks(n))
                {
                    let r = (xrow.iter().map(|v| v * v).sum::<f64>() / n as f64 + RMS_EPS).sqrt();
                    let gy: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                    d.extend(grow.iter().zip(yrow).map(|(gv, y)| (gv - y * gy) / r));
                }
                acc(grads, *x, shaped(*x, d));
            }
            Op::Gather(table, indices) => {
                let t = val(*table);
                let n = t.cols();
                let mut d = vec![0.0; t.len()];
                for (r, &i) in indices.iter().enumerate() {
                    for (dst, src) in d[i * n..(i + 1) * n].iter_mut().zip(g.row(r)) {
                        *dst += src;
                    }
                }
                acc(grads, *table, shaped(*table, d));
            }
            Op::SliceRows(x, start, len) => {
                let t = val(*x);
                let n = t.cols();
                let mut d = vec![0.0; t.len()];
                d[start * n..(start + len) * n].copy_from_slice(g.data());
                acc(grads, *x, shaped(*x, d));
            }
            Op::SliceCols(x, start, len) => {
                let t = val(*x);
                let n = t.cols();
                let mut d = vec![0.0; t.len()];
                for r in 0..t.rows() {
                    d[r * n + start..r * n + start + len].copy_from_slice(g.row(r));
                }
                acc(grads, *x, shaped(*x, d));
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let t = val(p);
                    let w = t.cols();
                    let d = (0..t.rows())
                        .flat_map(|r| g.row(r)[offset..offset + w].iter().copied())
                        .collect();
                    acc(grads, p, shaped(p, d));
                    offset += w;
                }
            }
            Op::MeanRows(x, rows) => {
                let t = val(*x);
                let n = t.cols();
                let inv = 1.0 / rows.len() as f64;
                let mut d = vec![0.0; t.len()];
                for &r in rows {
                    for (dst, src) in d[r * n..(r + 1) * n].iter_mut().zip(g.data()) {
                        *dst += src * inv;
                    }
                }
                acc(grads, *x, shaped(*x, d));
            }
            Op::Sum(x) => {
                let gv = g.item();
                acc(grads, *x, Tensor::filled(val(*x).shape(), gv));
            }
            Op::CrossEntropy { logits, targets } => {
                let gv = g.item() / targets.len() as f64;
                let probs = node.aux.as_ref().expect("softmax cached at forward");
                let n = probs.cols();
                let mut d: Vec<f64> = probs.data().iter().map(|p| p * gv).collect();
                for (r, &t) in targets.iter().enumerate() {
                    d[r * n + t] -= gv;
                }
                acc(grads, *logits, shaped(*logits, d));
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = val(p).len();
                    acc(grads, p, shaped(p, g.data()[offset..offset + len].to_vec()));
                    offset += len;
                }
            }
            Op::Bce { probs, labels, eps } => {
                let gv = g.item();
                let d = val(*probs)
                    .data()
                    .iter()
                    .zip(labels)
                    .map(|(&p, &y)| {
                        if p < *eps || p > 1.0 - eps {
                            0.0
                        } else {
                            gv * (-(y / p) + (1.0 - y) / (1.0 - p))
                        }
                    })
                    .collect();
                acc(grads, *probs, shaped(*probs, d));
            }
        }
        Ok(())
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
