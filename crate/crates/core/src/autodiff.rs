//! Tape-based reverse-mode automatic differentiation over [`Matrix`].
//!
//! Every operation is evaluated eagerly and appended to the tape together
//! with whatever it needs for its backward rule. Node ids grow with creation
//! time, so the tape is a DAG in topological order and [`Tape::backward`] is a
//! single reverse sweep.
//!
//! ```
//! use hcgae::autodiff::Tape;
//! use hcgae::Matrix;
//!
//! let mut tape = Tape::new();
//! let w = tape.leaf(Matrix::from_rows(&[[1.0, -2.0], [3.0, 0.5]]).unwrap());
//! let loss = tape.sum(w);
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(w).as_slice(), &[1.0; 4]);
//! ```

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::params::{ParamId, ParamStore};
use std::collections::HashMap;
use std::sync::Arc;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Primitive operation kinds recorded on the tape.
#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Constant,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Transpose(Var),
    Relu(Var),
    RowSoftmax(Var),
    Exp(Var),
    Ln(Var),
    Powf(Var, f64),
    Sum(Var),
    Mean(Var),
    SumSquares(Var),
    RowSum(Var),
    ScaleRows(Var, Var),
    ScaleCols(Var, Var),
    AddIdentity(Var),
    ZeroDiagonal(Var),
    GatherRows(Var, Arc<[usize]>),
    Submatrix(Var, Arc<[usize]>),
    LeadingCols(Var, usize),
    ScatterRows(Vec<(Var, Arc<[usize]>)>),
    StraightThrough(Var),
    BceWithLogits(Var, Arc<Matrix>),
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf | Constant => vec![],
            MatMul(a, b) | Add(a, b) | Sub(a, b) | Mul(a, b) | ScaleRows(a, b) | ScaleCols(a, b) => vec![*a, *b],
            Scale(a, _)
            | Transpose(a)
            | Relu(a)
            | RowSoftmax(a)
            | Exp(a)
            | Ln(a)
            | Powf(a, _)
            | Sum(a)
            | Mean(a)
            | SumSquares(a)
            | RowSum(a)
            | AddIdentity(a)
            | ZeroDiagonal(a)
            | GatherRows(a, _)
            | Submatrix(a, _)
            | LeadingCols(a, _)
            | StraightThrough(a)
            | BceWithLogits(a, _) => vec![*a],
            ScatterRows(parts) => parts.iter().map(|(v, _)| *v).collect(),
        }
    }
}

struct Node {
    value: Arc<Matrix>,
    op: Op,
    requires_grad: bool,
}

/// Deliberate corruption of a backward rule, used as a negative control for
/// gradient checking.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradientFault {
    /// Scales the left-operand gradient of every matmul by 1.5.
    MatMulLeft,
}

/// Recording of one forward computation.
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    fault: Option<GradientFault>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: HashMap::new(),
            fault: None,
        }
    }

    pub fn with_fault(fault: GradientFault) -> Self {
        Self {
            fault: Some(fault),
            ..Self::new()
        }
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

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.push_with(Arc::new(value), op, requires_grad)
    }

    fn push_with(&mut self, value: Arc<Matrix>, op: Op, requires_grad: bool) -> Var {
        debug_assert!(value.is_finite(), "non-finite value from {op:?}");
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Differentiable leaf that is not tied to a parameter store.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push_with(Arc::new(value), Op::Leaf, true)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push_with(Arc::new(value), Op::Constant, false)
    }

    pub fn constant_shared(&mut self, value: Arc<Matrix>) -> Var {
        self.push_with(value, Op::Constant, false)
    }

    /// Leaf for a stored parameter. Repeated calls return the same node, so
    /// every use of a parameter accumulates into one gradient.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push_with(store.shared(id), Op::Leaf, true);
        self.params.insert(id, v);
        v
    }

    /// Parameters that have a leaf on this tape, ordered by id.
    pub fn param_leaves(&self) -> Vec<(ParamId, Var)> {
        let mut out: Vec<_> = self.params.iter().map(|(&p, &v)| (p, v)).collect();
        out.sort();
        out
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        Ok(self.push(value, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, alpha: f64) -> Var {
        let value = self.value(a).scale(alpha);
        self.push(value, Op::Scale(a, alpha))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| if v > 0.0 { v } else { 0.0 });
        self.push(value, Op::Relu(a))
    }

    pub fn row_softmax(&mut self, a: Var) -> Var {
        let value = row_softmax(self.value(a));
        self.push(value, Op::RowSoftmax(a))
    }

    /// Softmax down each column.
    pub fn col_softmax(&mut self, a: Var) -> Var {
        let t = self.transpose(a);
        let s = self.row_softmax(t);
        self.transpose(s)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        self.push(value, Op::Exp(a))
    }

    /// Elementwise natural log. Inputs must be positive.
    pub fn ln(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::ln);
        self.push(value, Op::Ln(a))
    }

    /// Elementwise power. Inputs must be positive when `p` is fractional.
    pub fn powf(&mut self, a: Var, p: f64) -> Var {
        let value = self.value(a).map(|v| v.powf(p));
        self.push(value, Op::Powf(a, p))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        self.push(value, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let value = Matrix::scalar(m.sum() / m.len().max(1) as f64);
        self.push(value, Op::Mean(a))
    }

    /// Squared Frobenius norm as a 1x1 node.
    pub fn sum_squares(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).frobenius_sq());
        self.push(value, Op::SumSquares(a))
    }

    /// Row sums as an `n x 1` column.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let value = Matrix::column(&self.value(a).row_sums());
        self.push(value, Op::RowSum(a))
    }

    /// `out[i, j] = m[i, j] * v[i]` for a column `v`.
    pub fn scale_rows(&mut self, m: Var, v: Var) -> Result<Var> {
        let (mm, vv) = (self.value(m), self.value(v));
        if vv.shape() != (mm.rows(), 1) {
            return Err(Error::Shape {
                op: "scale_rows",
                left: mm.shape(),
                right: vv.shape(),
            });
        }
        let value = Matrix::from_fn(mm.rows(), mm.cols(), |r, c| mm.get(r, c) * vv.get(r, 0));
        Ok(self.push(value, Op::ScaleRows(m, v)))
    }

    /// `out[i, j] = m[i, j] * v[j]` for a column `v`.
    pub fn scale_cols(&mut self, m: Var, v: Var) -> Result<Var> {
        let (mm, vv) = (self.value(m), self.value(v));
        if vv.shape() != (mm.cols(), 1) {
            return Err(Error::Shape {
                op: "scale_cols",
                left: mm.shape(),
                right: vv.shape(),
            });
        }
        let value = Matrix::from_fn(mm.rows(), mm.cols(), |r, c| mm.get(r, c) * vv.get(c, 0));
        Ok(self.push(value, Op::ScaleCols(m, v)))
    }

    pub fn add_identity(&mut self, a: Var) -> Result<Var> {
        let m = self.value(a);
        if m.rows() != m.cols() {
            return Err(Error::Shape {
                op: "add_identity",
                left: m.shape(),
                right: m.shape(),
            });
        }
        let mut value = m.clone();
        for i in 0..value.rows() {
            value.set(i, i, value.get(i, i) + 1.0);
        }
        Ok(self.push(value, Op::AddIdentity(a)))
    }

    pub fn zero_diagonal(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        for i in 0..value.rows().min(value.cols()) {
            value.set(i, i, 0.0);
        }
        self.push(value, Op::ZeroDiagonal(a))
    }

    pub fn gather_rows(&mut self, a: Var, idx: Arc<[usize]>) -> Var {
        let value = self.value(a).select_rows(&idx);
        self.push(value, Op::GatherRows(a, idx))
    }

    /// Square submatrix `a[idx, idx]`.
    pub fn submatrix(&mut self, a: Var, idx: Arc<[usize]>) -> Var {
        let value = self.value(a).submatrix(&idx);
        self.push(value, Op::Submatrix(a, idx))
    }

    pub fn leading_cols(&mut self, a: Var, k: usize) -> Result<Var> {
        let m = self.value(a);
        if k > m.cols() {
            return Err(Error::invalid(format!(
                "leading_cols: asked for {k} of {} columns",
                m.cols()
            )));
        }
        if k == m.cols() {
            return Ok(a);
        }
        let value = m.leading_cols(k);
        Ok(self.push(value, Op::LeadingCols(a, k)))
    }

    /// Stacks `parts` into an `rows x cols` matrix: part `(v, idx)` writes row
    /// `r` of `v` to row `idx[r]`. Rows not covered by any part stay zero.
    pub fn scatter_rows(&mut self, rows: usize, cols: usize, parts: Vec<(Var, Arc<[usize]>)>) -> Result<Var> {
        let mut value = Matrix::zeros(rows, cols);
        for (v, idx) in &parts {
            let m = self.value(*v);
            if m.cols() != cols || m.rows() != idx.len() {
                return Err(Error::Shape {
                    op: "scatter_rows",
                    left: (idx.len(), cols),
                    right: m.shape(),
                });
            }
            for (r, &dst) in idx.iter().enumerate() {
                value.row_mut(dst).copy_from_slice(m.row(r));
            }
        }
        Ok(self.push(value, Op::ScatterRows(parts)))
    }

    /// Node whose value is `hard` but whose gradient passes unchanged to
    /// `soft`.
    pub fn straight_through(&mut self, hard: Matrix, soft: Var) -> Result<Var> {
        if hard.shape() != self.shape(soft) {
            return Err(Error::Shape {
                op: "straight_through",
                left: hard.shape(),
                right: self.shape(soft),
            });
        }
        Ok(self.push(hard, Op::StraightThrough(soft)))
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against `targets`,
    /// computed in the overflow-free form.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Arc<Matrix>) -> Result<Var> {
        let x = self.value(logits);
        if x.shape() != targets.shape() {
            return Err(Error::Shape {
                op: "bce_with_logits",
                left: x.shape(),
                right: targets.shape(),
            });
        }
        let total: f64 = x
            .as_slice()
            .iter()
            .zip(targets.as_slice())
            .map(|(&x, &t)| x.max(0.0) - x * t + (-x.abs()).exp().ln_1p())
            .sum();
        let value = Matrix::scalar(total / x.len().max(1) as f64);
        Ok(self.push(value, Op::BceWithLogits(logits, targets)))
    }

    /// Mean squared error between two equally shaped nodes.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let n = self.value(d).len().max(1) as f64;
        let sq = self.sum_squares(d);
        Ok(self.scale(sq, 1.0 / n))
    }

    /// Parameter leaves that `root` depends on.
    pub fn reachable_params(&self, root: Var) -> Vec<ParamId> {
        let mut seen = vec![false; root.0 + 1];
        seen[root.0] = true;
        for i in (0..=root.0).rev() {
            if !seen[i] {
                continue;
            }
            for v in self.nodes[i].op.inputs() {
                seen[v.0] = true;
            }
        }
        let mut out: Vec<_> = self
            .params
            .iter()
            .filter(|(_, v)| v.0 <= root.0 && seen[v.0])
            .map(|(&p, _)| p)
            .collect();
        out.sort();
        out
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(Error::invalid(format!(
                "backward needs a 1x1 loss, got {}x{}",
                shape.0, shape.1
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients {
            grads,
            params: self.param_leaves(),
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], v: Var, g: Matrix) -> Result<()> {
        if !self.nodes[v.0].requires_grad {
            return Ok(());
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => {
                *slot = Some(g);
                Ok(())
            }
        }
    }

    fn propagate(&self, i: usize, g: &Matrix, grads: &mut [Option<Matrix>]) -> Result<()> {
        let node = &self.nodes[i];
        let out = &node.value;
        let val = |v: &Var| -> &Matrix { &self.nodes[v.0].value };
        let needs = |v: &Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                if needs(a) {
                    let mut ga = g.matmul_t(val(b))?;
                    if self.fault == Some(GradientFault::MatMulLeft) {
                        ga = ga.scale(1.5);
                    }
                    self.accumulate(grads, *a, ga)?;
                }
                if needs(b) {
                    let gb = val(a).t_matmul(g)?;
                    self.accumulate(grads, *b, gb)?;
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone())?;
                self.accumulate(grads, *b, g.clone())?;
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone())?;
                self.accumulate(grads, *b, g.scale(-1.0))?;
            }
            Op::Mul(a, b) => {
                if needs(a) {
                    self.accumulate(grads, *a, g.hadamard(val(b))?)?;
                }
                if needs(b) {
                    self.accumulate(grads, *b, g.hadamard(val(a))?)?;
                }
            }
            Op::Scale(a, alpha) => self.accumulate(grads, *a, g.scale(*alpha))?,
            Op::Transpose(a) => self.accumulate(grads, *a, g.transpose())?,
            Op::Relu(a) => {
                let ga = g.zip_with(val(a), "relu", |g, x| if x > 0.0 { g } else { 0.0 })?;
                self.accumulate(grads, *a, ga)?;
            }
            Op::RowSoftmax(a) => {
                let mut ga = Matrix::zeros(out.rows(), out.cols());
                for r in 0..out.rows() {
                    let (y, gy) = (out.row(r), g.row(r));
                    let dot: f64 = y.iter().zip(gy).map(|(y, g)| y * g).sum();
                    for (dst, (y, gy)) in ga.row_mut(r).iter_mut().zip(y.iter().zip(gy)) {
                        *dst = y * (gy - dot);
                    }
                }
                self.accumulate(grads, *a, ga)?;
            }
            Op::Exp(a) => self.accumulate(grads, *a, g.hadamard(out)?)?,
            Op::Ln(a) => {
                let ga = g.zip_with(val(a), "ln", |g, x| g / x)?;
                self.accumulate(grads, *a, ga)?;
            }
            Op::Powf(a, p) => {
                let ga = g.zip_with(val(a), "powf", |g, x| g * p * x.powf(p - 1.0))?;
                self.accumulate(grads, *a, ga)?;
            }
            Op::Sum(a) => {
                let (r, c) = val(a).shape();
                self.accumulate(grads, *a, Matrix::filled(r, c, g.item()))?;
            }
            Op::Mean(a) => {
                let (r, c) = val(a).shape();
                let n = (r * c).max(1) as f64;
                self.accumulate(grads, *a, Matrix::filled(r, c, g.item() / n))?;
            }
            Op::SumSquares(a) => {
                let s = 2.0 * g.item();
                self.accumulate(grads, *a, val(a).scale(s))?;
            }
            Op::RowSum(a) => {
                let (r, c) = val(a).shape();
                self.accumulate(grads, *a, Matrix::from_fn(r, c, |i, _| g.get(i, 0)))?;
            }
            Op::ScaleRows(m, v) => {
                let (mm, vv) = (val(m), val(v));
                if needs(m) {
                    let gm = Matrix::from_fn(mm.rows(), mm.cols(), |r, c| g.get(r, c) * vv.get(r, 0));
                    self.accumulate(grads, *m, gm)?;
                }
                if needs(v) {
                    let gv = Matrix::from_fn(mm.rows(), 1, |r, _| {
                        g.row(r).iter().zip(mm.row(r)).map(|(a, b)| a * b).sum()
                    });
                    self.accumulate(grads, *v, gv)?;
                }
            }
            Op::ScaleCols(m, v) => {
                let (mm, vv) = (val(m), val(v));
                if needs(m) {
                    let gm = Matrix::from_fn(mm.rows(), mm.cols(), |r, c| g.get(r, c) * vv.get(c, 0));
                    self.accumulate(grads, *m, gm)?;
                }
                if needs(v) {
                    let mut gv = Matrix::zeros(mm.cols(), 1);
                    for r in 0..mm.rows() {
                        for (c, (a, b)) in g.row(r).iter().zip(mm.row(r)).enumerate() {
                            gv.as_mut_slice()[c] += a * b;
                        }
                    }
                    self.accumulate(grads, *v, gv)?;
                }
            }
            Op::AddIdentity(a) => self.accumulate(grads, *a, g.clone())?,
            Op::ZeroDiagonal(a) => {
                let mut ga = g.clone();
                for d in 0..ga.rows().min(ga.cols()) {
                    ga.set(d, d, 0.0);
                }
                self.accumulate(grads, *a, ga)?;
            }
            Op::GatherRows(a, idx) => {
                let (r, c) = val(a).shape();
                let mut ga = Matrix::zeros(r, c);
                for (src, &dst) in idx.iter().enumerate() {
                    for (d, s) in ga.row_mut(dst).iter_mut().zip(g.row(src)) {
                        *d += s;
                    }
                }
                self.accumulate(grads, *a, ga)?;
            }
            Op::Submatrix(a, idx) => {
                let (r, c) = val(a).shape();
                let mut ga = Matrix::zeros(r, c);
                for (i, &pi) in idx.iter().enumerate() {
                    for (j, &pj) in idx.iter().enumerate() {
                        ga.set(pi, pj, ga.get(pi, pj) + g.get(i, j));
                    }
                }
                self.accumulate(grads, *a, ga)?;
            }
            Op::LeadingCols(a, k) => {
                let (r, c) = val(a).shape();
                let mut ga = Matrix::zeros(r, c);
                for i in 0..r {
                    ga.row_mut(i)[..*k].copy_from_slice(g.row(i));
                }
                self.accumulate(grads, *a, ga)?;
            }
            Op::ScatterRows(parts) => {
                for (v, idx) in parts {
                    if needs(v) {
                        self.accumulate(grads, *v, g.select_rows(idx))?;
                    }
                }
            }
            Op::StraightThrough(soft) => self.accumulate(grads, *soft, g.clone())?,
            Op::BceWithLogits(a, targets) => {
                let x = val(a);
                let scale = g.item() / x.len().max(1) as f64;
                let ga = x.zip_with(targets, "bce", |x, t| (sigmoid(x) - t) * scale)?;
                self.accumulate(grads, *a, ga)?;
            }
        }
        Ok(())
    }
}

/// Result of [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    params: Vec<(ParamId, Var)>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient with respect to `v`; zeros when `v` does not influence the loss.
    pub fn get(&self, v: Var) -> Matrix {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }

    pub fn get_ref(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
    }

    /// Gradients of every parameter leaf on the tape, including zero
    /// gradients for unreachable leaves.
    pub fn params(&self) -> Vec<(ParamId, Matrix)> {
        self.params.iter().map(|&(p, v)| (p, self.get(v))).collect()
    }

    /// Moves the parameter gradients out.
    pub fn into_params(mut self) -> Vec<(ParamId, Matrix)> {
        let params = std::mem::take(&mut self.params);
        params
            .into_iter()
            .map(|(p, v)| {
                let g = self.grads[v.0].take().unwrap_or_else(|| {
                    let (r, c) = self.shapes[v.0];
                    Matrix::zeros(r, c)
                });
                (p, g)
            })
            .collect()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax with max subtraction.
pub fn row_softmax(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

/// Elementwise `max(0, x)`.
pub fn relu(m: &Matrix) -> Matrix {
    m.map(|v| if v > 0.0 { v } else { 0.0 })
}
