//! Recorded computation graph with reverse-mode differentiation.
//!
//! Every operation appends a node holding its value and, when the tape is
//! recording, the rule that propagates gradients back to its operands.
//! Parameters are bound by reference so a forward pass never copies weights.
//! Operand indices always precede the node that uses them, so a single
//! reverse sweep visits nodes in topological order.

use std::borrow::Cow;

use crate::error::{Error, Result};

use super::conv;
use super::matrix::{gemm_nt, gemm_tn};
use super::ops::{softmax_unchecked, Activation};
use super::Matrix;

/// Floor inside the log of the cross-entropy loss.
pub const LOG_FLOOR: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation kinds, used for reporting and fault injection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Leaf,
    MatMul,
    Add,
    Sub,
    AddBias,
    Mul,
    Scale,
    Map(Activation),
    SliceCols,
    ConcatCols,
    ConcatRows,
    Sum,
    MeanCols,
    WideConv,
    MaxOverTime,
    Mask,
    Softmax,
    SoftmaxCrossEntropy,
    Gather,
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddBias(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Map(Var, Activation),
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Sum(Var),
    MeanCols(Var),
    WideConv { inputs: Vec<Var>, weight: Var, window: usize },
    MaxOverTime { x: Var, argmax: Vec<usize> },
    Mask { x: Var, mask: Matrix },
    Softmax(Var),
    SoftmaxCrossEntropy { logits: Var, labels: Vec<usize>, probs: Matrix },
    Gather { table: Var, ids: Vec<Option<usize>> },
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::MatMul(..) => OpKind::MatMul,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::AddBias(..) => OpKind::AddBias,
            Op::Mul(..) => OpKind::Mul,
            Op::Scale(..) => OpKind::Scale,
            Op::Map(_, a) => OpKind::Map(*a),
            Op::SliceCols { .. } => OpKind::SliceCols,
            Op::ConcatCols(_) => OpKind::ConcatCols,
            Op::ConcatRows(_) => OpKind::ConcatRows,
            Op::Sum(_) => OpKind::Sum,
            Op::MeanCols(_) => OpKind::MeanCols,
            Op::WideConv { .. } => OpKind::WideConv,
            Op::MaxOverTime { .. } => OpKind::MaxOverTime,
            Op::Mask { .. } => OpKind::Mask,
            Op::Softmax(_) => OpKind::Softmax,
            Op::SoftmaxCrossEntropy { .. } => OpKind::SoftmaxCrossEntropy,
            Op::Gather { .. } => OpKind::Gather,
        }
    }
}

struct Node<'p> {
    value: Cow<'p, Matrix>,
    op: Op,
}

/// Scales the gradient an operation kind propagates. Exists so gradient
/// checkers can be shown to catch a broken backward rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fault {
    pub kind: OpKind,
    pub factor: f64,
}

pub struct Tape<'p> {
    nodes: Vec<Node<'p>>,
    params: Vec<Var>,
    recording: bool,
    fault: Option<Fault>,
}

impl<'p> Tape<'p> {
    /// A tape that records backward rules (train mode).
    pub fn recording() -> Self {
        Tape {
            nodes: Vec::new(),
            params: Vec::new(),
            recording: true,
            fault: None,
        }
    }

    /// A tape that only evaluates values (inference mode).
    pub fn inference() -> Self {
        Tape {
            recording: false,
            ..Tape::recording()
        }
    }

    pub fn with_fault(mut self, fault: Fault) -> Self {
        self.fault = Some(fault);
        self
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn kind(&self, v: Var) -> OpKind {
        self.nodes[v.0].op.kind()
    }

    /// Number of parameter leaves bound so far.
    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn push(&mut self, value: Cow<'p, Matrix>, op: Op) -> Var {
        let op = if self.recording { op } else { Op::Leaf };
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Binds a parameter by reference. Its gradient is reported by
    /// [`Gradients::param_grads`] in binding order.
    pub fn param(&mut self, m: &'p Matrix) -> Var {
        let v = self.push(Cow::Borrowed(m), Op::Leaf);
        self.params.push(v);
        v
    }

    /// A leaf that receives no reported gradient.
    pub fn constant(&mut self, m: Matrix) -> Var {
        self.push(Cow::Owned(m), Op::Leaf)
    }

    pub fn constant_ref(&mut self, m: &'p Matrix) -> Var {
        self.push(Cow::Borrowed(m), Op::Leaf)
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Cow::Owned(out), Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        Ok(self.push(Cow::Owned(out), Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).sub(self.value(b))?;
        Ok(self.push(Cow::Owned(out), Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(Cow::Owned(out), Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let out = self.value(x).scale(k);
        self.push(Cow::Owned(out), Op::Scale(x, k))
    }

    /// Adds the column vector `b` to every column of `x`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        if self.shape(b) != (rows, 1) {
            return Err(Error::Dimension {
                op: "add_bias",
                left: (rows, cols),
                right: self.shape(b),
            });
        }
        let mut out = self.value(x).clone();
        let bias = self.value(b).as_slice();
        for (r, row) in out.as_mut_slice().chunks_mut(cols.max(1)).enumerate().take(rows) {
            row.iter_mut().for_each(|v| *v += bias[r]);
        }
        Ok(self.push(Cow::Owned(out), Op::AddBias(x, b)))
    }

    pub fn map(&mut self, x: Var, act: Activation) -> Var {
        let out = self.value(x).map(|v| act.apply(v));
        self.push(Cow::Owned(out), Op::Map(x, act))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, Activation::Tanh)
    }

    /// Columns `start..end` of `x`.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        if start >= end || end > cols {
            return Err(Error::domain(format!("column range {start}..{end} of a {rows}x{cols} matrix")));
        }
        let src = self.value(x);
        let width = end - start;
        let mut out = Matrix::zeros(rows, width);
        for r in 0..rows {
            out.as_mut_slice()[r * width..(r + 1) * width].copy_from_slice(&src.row(r)[start..end]);
        }
        Ok(self.push(Cow::Owned(out), Op::SliceCols { x, start }))
    }

    pub fn column(&mut self, x: Var, j: usize) -> Result<Var> {
        self.slice_cols(x, j, j + 1)
    }

    /// Horizontal concatenation.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::domain("concat of zero parts"))?;
        let rows = self.shape(first).0;
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.0 != rows {
                return Err(Error::Dimension {
                    op: "concat_cols",
                    left: self.shape(first),
                    right: s,
                });
            }
            total += s.1;
        }
        let mut out = Matrix::zeros(rows, total);
        let mut offset = 0;
        for &p in parts {
            let m = self.value(p);
            for r in 0..rows {
                out.as_mut_slice()[r * total + offset..r * total + offset + m.cols()].copy_from_slice(m.row(r));
            }
            offset += m.cols();
        }
        Ok(self.push(Cow::Owned(out), Op::ConcatCols(parts.to_vec())))
    }

    /// Vertical concatenation.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::domain("concat of zero parts"))?;
        let cols = self.shape(first).1;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.1 != cols {
                return Err(Error::Dimension {
                    op: "concat_rows",
                    left: self.shape(first),
                    right: s,
                });
            }
            data.extend_from_slice(self.value(p).as_slice());
            rows += s.0;
        }
        let out = Matrix::from_vec(rows, cols, data)?;
        Ok(self.push(Cow::Owned(out), Op::ConcatRows(parts.to_vec())))
    }

    /// Sum of all entries, as a 1×1 node.
    pub fn sum(&mut self, x: Var) -> Var {
        let out = Matrix::filled(1, 1, self.value(x).sum());
        self.push(Cow::Owned(out), Op::Sum(x))
    }

    /// Mean over columns: `rows × s → rows × 1`.
    pub fn mean_cols(&mut self, x: Var) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        if cols == 0 {
            return Err(Error::domain("mean over zero columns"));
        }
        let m = self.value(x);
        let out = Matrix::column_vector((0..rows).map(|r| m.row(r).iter().sum::<f64>() / cols as f64).collect());
        Ok(self.push(Cow::Owned(out), Op::MeanCols(x)))
    }

    /// Multi-channel wide convolution pre-activations.
    ///
    /// `inputs` are `c` maps of shape `d × s`; `weight` is
    /// `filters × (c·l·d)` in the layout of [`conv::im2col`]; `bias` is
    /// `filters × 1`. Output is `filters × (s + l − 1)`.
    pub fn wide_conv(&mut self, inputs: &[Var], weight: Var, bias: Var, window: usize) -> Result<Var> {
        let maps: Vec<&Matrix> = inputs.iter().map(|&v| self.value(v)).collect();
        let cols = conv::im2col(&maps, window)?;
        let w = self.value(weight);
        if w.cols() != cols.rows() {
            return Err(Error::Dimension {
                op: "wide_conv",
                left: w.shape(),
                right: cols.shape(),
            });
        }
        let pre = w.matmul(&cols)?;
        let pre_var = self.push(
            Cow::Owned(pre),
            Op::WideConv {
                inputs: inputs.to_vec(),
                weight,
                window,
            },
        );
        self.add_bias(pre_var, bias)
    }

    /// Row-wise maximum: `rows × T → rows × 1`. Ties resolve to the first index.
    pub fn max_over_time(&mut self, x: Var) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        if cols == 0 {
            return Err(Error::domain("max over an empty feature map"));
        }
        let m = self.value(x);
        let argmax: Vec<usize> = (0..rows).map(|r| super::ops::argmax(m.row(r))).collect();
        let out = Matrix::column_vector(argmax.iter().enumerate().map(|(r, &k)| m.get(r, k)).collect());
        Ok(self.push(Cow::Owned(out), Op::MaxOverTime { x, argmax }))
    }

    /// Entrywise product with a constant mask (dropout).
    pub fn mask(&mut self, x: Var, mask: Matrix) -> Result<Var> {
        let out = self.value(x).hadamard(&mask)?;
        Ok(self.push(Cow::Owned(out), Op::Mask { x, mask }))
    }

    /// Column-wise softmax.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        if self.shape(x).0 == 0 {
            return Err(Error::domain("softmax of an empty vector"));
        }
        let out = column_softmax(self.value(x));
        Ok(self.push(Cow::Owned(out), Op::Softmax(x)))
    }

    /// Mean cross-entropy of column-wise softmax(logits) against `labels`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (k, n) = self.shape(logits);
        if labels.len() != n {
            return Err(Error::Dimension {
                op: "softmax_cross_entropy",
                left: (k, n),
                right: (1, labels.len()),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::domain(format!("label {bad} out of range for {k} classes")));
        }
        let probs = column_softmax(self.value(logits));
        let loss = labels
            .iter()
            .enumerate()
            .map(|(j, &l)| -probs.get(l, j).max(LOG_FLOOR).ln())
            .sum::<f64>()
            / n as f64;
        Ok(self.push(
            Cow::Owned(Matrix::filled(1, 1, loss)),
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        ))
    }

    /// Embedding lookup: column `t` is row `ids[t]` of `table`, or column
    /// `t` of `fallback` when `ids[t]` is `None`.
    pub fn gather(&mut self, table: Var, ids: &[Option<usize>], fallback: &Matrix) -> Result<Var> {
        let (vocab, dim) = self.shape(table);
        if fallback.shape() != (dim, ids.len()) {
            return Err(Error::Dimension {
                op: "gather",
                left: (dim, ids.len()),
                right: fallback.shape(),
            });
        }
        let t = self.value(table);
        let mut out = fallback.clone();
        for (j, id) in ids.iter().enumerate() {
            if let Some(r) = *id {
                if r >= vocab {
                    return Err(Error::domain(format!("row {r} out of range for table of {vocab}")));
                }
                out.set_col(j, t.row(r));
            }
        }
        Ok(self.push(
            Cow::Owned(out),
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if !self.recording {
            return Err(Error::Contract("backward on a tape that is not recording".into()));
        }
        if self.shape(loss) != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Matrix>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for i in (0..=loss.0).rev() {
            let Some(stored) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let faulty = self.fault.filter(|f| f.kind == node.op.kind());
            let scaled;
            let g = match faulty {
                Some(f) => {
                    scaled = stored.scale(f.factor);
                    &scaled
                }
                None => &stored,
            };
            self.propagate(&node.op, &node.value, g, &mut grads);
            grads[i] = Some(stored);
        }

        let param_grads = self
            .params
            .iter()
            .map(|&p| {
                grads
                    .get(p.0)
                    .and_then(|g| g.clone())
                    .unwrap_or_else(|| Matrix::zeros(self.shape(p).0, self.shape(p).1))
            })
            .collect();
        Ok(Gradients { grads, param_grads })
    }

    fn propagate(&self, op: &Op, out: &Matrix, g: &Matrix, grads: &mut [Option<Matrix>]) {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let ga = slot(grads, *a, va.shape());
                gemm_nt(g, vb, ga);
                let gb = slot(grads, *b, vb.shape());
                gemm_tn(va, g, gb);
            }
            Op::Add(a, b) => {
                slot(grads, *a, g.shape()).add_assign(g);
                slot(grads, *b, g.shape()).add_assign(g);
            }
            Op::Sub(a, b) => {
                slot(grads, *a, g.shape()).add_assign(g);
                slot(grads, *b, g.shape()).add_scaled_assign(g, -1.0);
            }
            Op::AddBias(x, b) => {
                slot(grads, *x, g.shape()).add_assign(g);
                let gb = slot(grads, *b, (g.rows(), 1));
                for r in 0..g.rows() {
                    gb.as_mut_slice()[r] += g.row(r).iter().sum::<f64>();
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let ga = slot(grads, *a, g.shape());
                for ((o, &gv), &bv) in ga.as_mut_slice().iter_mut().zip(g.as_slice()).zip(vb.as_slice()) {
                    *o += gv * bv;
                }
                let gb = slot(grads, *b, g.shape());
                for ((o, &gv), &av) in gb.as_mut_slice().iter_mut().zip(g.as_slice()).zip(va.as_slice()) {
                    *o += gv * av;
                }
            }
            Op::Scale(x, k) => slot(grads, *x, g.shape()).add_scaled_assign(g, *k),
            Op::Map(x, act) => {
                let input = self.value(*x);
                let gx = slot(grads, *x, g.shape());
                for (((o, &gv), &xv), &yv) in gx
                    .as_mut_slice()
                    .iter_mut()
                    .zip(g.as_slice())
                    .zip(input.as_slice())
                    .zip(out.as_slice())
                {
                    *o += gv * act.derivative(xv, yv);
                }
            }
            Op::SliceCols { x, start } => {
                let gx = slot(grads, *x, self.shape(*x));
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        let v = gx.get(r, start + c) + g.get(r, c);
                        gx.set(r, start + c, v);
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let shape = self.shape(p);
                    let gp = slot(grads, p, shape);
                    for r in 0..shape.0 {
                        for c in 0..shape.1 {
                            let v = gp.get(r, c) + g.get(r, offset + c);
                            gp.set(r, c, v);
                        }
                    }
                    offset += shape.1;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let shape = self.shape(p);
                    let n = shape.0 * shape.1;
                    let gp = slot(grads, p, shape);
                    for (o, &gv) in gp.as_mut_slice().iter_mut().zip(&g.as_slice()[offset..offset + n]) {
                        *o += gv;
                    }
                    offset += n;
                }
            }
            Op::Sum(x) => {
                let gv = g.get(0, 0);
                slot(grads, *x, self.shape(*x)).as_mut_slice().iter_mut().for_each(|o| *o += gv);
            }
            Op::MeanCols(x) => {
                let (rows, cols) = self.shape(*x);
                let gx = slot(grads, *x, (rows, cols));
                for r in 0..rows {
                    let share = g.get(r, 0) / cols as f64;
                    gx.as_mut_slice()[r * cols..(r + 1) * cols].iter_mut().for_each(|o| *o += share);
                }
            }
            Op::WideConv { inputs, weight, window } => {
                let maps: Vec<&Matrix> = inputs.iter().map(|&v| self.value(v)).collect();
                let cols = conv::im2col(&maps, *window).expect("validated in forward");
                let w = self.value(*weight);
                gemm_nt(g, &cols, slot(grads, *weight, w.shape()));
                let mut gcols = Matrix::zeros(cols.rows(), cols.cols());
                gemm_tn(w, g, &mut gcols);
                let (d, s) = maps[0].shape();
                for (r, &input) in inputs.iter().enumerate() {
                    conv::col2im_add(&gcols, r, *window, slot(grads, input, (d, s)));
                }
            }
            Op::MaxOverTime { x, argmax } => {
                let gx = slot(grads, *x, self.shape(*x));
                for (r, &k) in argmax.iter().enumerate() {
                    let v = gx.get(r, k) + g.get(r, 0);
                    gx.set(r, k, v);
                }
            }
            Op::Mask { x, mask } => {
                let gx = slot(grads, *x, g.shape());
                for ((o, &gv), &m) in gx.as_mut_slice().iter_mut().zip(g.as_slice()).zip(mask.as_slice()) {
                    *o += gv * m;
                }
            }
            Op::Softmax(x) => {
                let gx = slot(grads, *x, g.shape());
                for c in 0..g.cols() {
                    let dot: f64 = (0..g.rows()).map(|r| g.get(r, c) * out.get(r, c)).sum();
                    for r in 0..g.rows() {
                        let v = gx.get(r, c) + out.get(r, c) * (g.get(r, c) - dot);
                        gx.set(r, c, v);
                    }
                }
            }
            Op::SoftmaxCrossEntropy { logits, labels, probs } => {
                let k = g.get(0, 0) / labels.len() as f64;
                let gl = slot(grads, *logits, probs.shape());
                gl.add_scaled_assign(probs, k);
                for (j, &l) in labels.iter().enumerate() {
                    let v = gl.get(l, j) - k;
                    gl.set(l, j, v);
                }
            }
            Op::Gather { table, ids } => {
                let gt = slot(grads, *table, self.shape(*table));
                for (j, id) in ids.iter().enumerate() {
                    if let Some(r) = *id {
                        for i in 0..g.rows() {
                            let v = gt.get(r, i) + g.get(i, j);
                            gt.set(r, i, v);
                        }
                    }
                }
            }
        }
    }
}

fn slot(grads: &mut [Option<Matrix>], v: Var, shape: (usize, usize)) -> &mut Matrix {
    grads[v.0].get_or_insert_with(|| Matrix::zeros(shape.0, shape.1))
}

fn column_softmax(x: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for c in 0..x.cols() {
        out.set_col(c, &softmax_unchecked(&x.col(c)));
    }
    out
}

/// Result of [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    param_grads: Vec<Matrix>,
}

impl Gradients {
    /// Gradient of the loss with respect to any node reached by the sweep.
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradients of bound parameters, in binding order. Parameters the
    /// loss does not depend on get zeros.
    pub fn param_grads(&self) -> &[Matrix] {
        &self.param_grads
    }

    pub fn into_param_grads(self) -> Vec<Matrix> {
        self.param_grads
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_all_ones() {
        let p = Matrix::from_rows(&[[1.0, -2.0, 3.0], [0.5, 0.0, 7.0]]).unwrap();
        let mut tape = Tape::recording();
        let x = tape.param(&p);
        let loss = tape.sum(x);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.param_grads()[0], Matrix::filled(2, 3, 1.0));
    }

    #[test]
    fn squared_sum_gradient() {
        let p = Matrix::column_vector(vec![1.0, 2.0]);
        let mut tape = Tape::recording();
        let x = tape.param(&p);
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum(sq);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.param_grads()[0].as_slice(), &[2.0, 4.0]);
    }

    #[test]
    fn backward_on_non_scalar_is_contract_error() {
        let p = Matrix::column_vector(vec![1.0, 2.0]);
        let mut tape = Tape::recording();
        let x = tape.param(&p);
        let y = tape.tanh(x);
        assert!(matches!(tape.backward(y), Err(Error::Contract(_))));
    }

    #[test]
    fn inference_tape_refuses_backward() {
        let p = Matrix::column_vector(vec![1.0]);
        let mut tape = Tape::inference();
        let x = tape.param(&p);
        let loss = tape.sum(x);
        assert_eq!(tape.value(loss).get(0, 0), 1.0);
        assert!(tape.backward(loss).is_err());
    }

    #[test]
    fn unused_param_gets_zero_gradient() {
        let a = Matrix::column_vector(vec![1.0, 2.0]);
        let b = Matrix::filled(3, 1, 4.0);
        let mut tape = Tape::recording();
        let x = tape.param(&a);
        let _unused = tape.param(&b);
        let loss = tape.sum(x);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.param_grads()[1], Matrix::zeros(3, 1));
    }

    #[test]
    fn max_over_time_routes_ties_to_first_index() {
        let m = Matrix::from_rows(&[[2.0, 2.0, 2.0]]).unwrap();
        let mut tape = Tape::recording();
        let x = tape.param(&m);
        let pooled = tape.max_over_time(x).unwrap();
        assert_eq!(tape.value(pooled).get(0, 0), 2.0);
        let g = tape.backward(pooled).unwrap();
        assert_eq!(g.param_grads()[0].as_slice(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn softmax_cross_entropy_gradient_is_pred_minus_onehot() {
        let z = Matrix::column_vector(vec![0.3, -1.2, 2.0, 0.1]);
        let mut tape = Tape::recording();
        let x = tape.param(&z);
        let loss = tape.softmax_cross_entropy(x, &[2]).unwrap();
        let g = tape.backward(loss).unwrap();
        let mut want = crate::numerics::softmax(z.as_slice()).unwrap();
        want[2] -= 1.0;
        for (a, b) in g.param_grads()[0].as_slice().iter().zip(&want) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn fault_scales_the_targeted_rule() {
        let p = Matrix::column_vector(vec![0.3]);
        let mut tape = Tape::recording().with_fault(Fault {
            kind: OpKind::Map(Activation::Tanh),
            factor: 2.0,
        });
        let x = tape.param(&p);
        let y = tape.tanh(x);
        let loss = tape.sum(y);
        let g = tape.backward(loss).unwrap();
        let exact = 1.0 - 0.3f64.tanh().powi(2);
        assert!((g.param_grads()[0].get(0, 0) - 2.0 * exact).abs() < 1e-15);
    }
}
