//! Minimal reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records one forward pass. Every operation appends a node holding
//! its value and the recipe for its vector-Jacobian product; [`Tape::backward`]
//! walks the nodes in reverse and returns gradients for every node. Only the
//! operations the forecasting model needs are provided.

use alloc::vec;
use alloc::vec::Vec;

use super::Matrix;
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    MulConst(Var, Matrix),
    Scale(Var, f64),
    Relu(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Recip(Var),
    Rsqrt(Var),
    Huber(Var, f64),
    Gather(Var, Vec<usize>),
    ScatterAdd(Var, Vec<usize>),
    SegmentSoftmax(Var, Vec<usize>),
    MaskedSoftmaxRows(Var, Vec<bool>),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    Mean(Vec<Var>),
    WeightedSum(Var, Matrix),
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    op: Op,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, zeros when nothing flowed into it.
    pub fn wrt(&self, v: Var) -> Matrix {
        match self.get(v) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }
}

/// Record of a forward computation.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn mismatch(op: &'static str, lhs: &Matrix, rhs: &Matrix) -> Error {
    Error::ShapeMismatch {
        op,
        lhs: lhs.shape(),
        rhs: rhs.shape(),
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

pub(crate) fn huber_value(x: f64, delta: f64) -> f64 {
    let a = x.abs();
    if a <= delta {
        0.5 * x * x
    } else {
        delta * (a - 0.5 * delta)
    }
}

fn huber_slope(x: f64, delta: f64) -> f64 {
    if x.abs() <= delta {
        x
    } else if x > 0.0 {
        delta
    } else {
        -delta
    }
}

/// Softmax over `rows` (indices into `x`) independently for every column.
fn softmax_group(x: &Matrix, out: &mut Matrix, rows: &[usize]) {
    for c in 0..x.cols() {
        let max = rows
            .iter()
            .map(|&r| x.get(r, c))
            .fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for &r in rows {
            let e = libm::exp(x.get(r, c) - max);
            out.set(r, c, e);
            total += e;
        }
        for &r in rows {
            out.set(r, c, out.get(r, c) / total);
        }
    }
}

fn segments(seg: &[usize]) -> Vec<Vec<usize>> {
    let n = seg.iter().copied().max().map_or(0, |m| m + 1);
    let mut groups = vec![Vec::new(); n];
    for (r, &s) in seg.iter().enumerate() {
        groups[s].push(r);
    }
    groups
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

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Input or parameter node. Constants are leaves whose gradient is ignored.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    /// Adds a `1 x d` row vector to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(mismatch("add_row", xv, bv));
        }
        let mut out = xv.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(bv.as_slice()) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddRow(x, bias)))
    }

    /// Scales row `r` of `x` by `col[r]`, where `col` is `n x 1`.
    pub fn mul_col(&mut self, x: Var, col: Var) -> Result<Var> {
        let (xv, cv) = (self.value(x), self.value(col));
        if cv.cols() != 1 || cv.rows() != xv.rows() {
            return Err(mismatch("mul_col", xv, cv));
        }
        let mut out = xv.clone();
        for r in 0..out.rows() {
            let s = cv.get(r, 0);
            out.row_mut(r).iter_mut().for_each(|o| *o *= s);
        }
        Ok(self.push(out, Op::MulCol(x, col)))
    }

    /// Element-wise product with a constant matrix (dropout masks, fixed coefficients).
    pub fn mul_const(&mut self, x: Var, m: Matrix) -> Result<Var> {
        let v = self.value(x).zip_map(&m, |a, b| a * b)?;
        Ok(self.push(v, Op::MulConst(x, m)))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let v = self.value(x).scale(s);
        self.push(v, Op::Scale(x, s))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|a| if a > 0.0 { a } else { 0.0 });
        self.push(v, Op::Relu(x))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let v = self.value(x).map(|a| if a > 0.0 { a } else { slope * a });
        self.push(v, Op::LeakyRelu(x, slope))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x).map(sigmoid);
        self.push(v, Op::Sigmoid(x))
    }

    pub fn recip(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|a| 1.0 / a);
        self.push(v, Op::Recip(x))
    }

    pub fn rsqrt(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|a| 1.0 / libm::sqrt(a));
        self.push(v, Op::Rsqrt(x))
    }

    /// Element-wise Huber loss of `x` with boundary `delta`.
    pub fn huber(&mut self, x: Var, delta: f64) -> Var {
        let v = self.value(x).map(|a| huber_value(a, delta));
        self.push(v, Op::Huber(x, delta))
    }

    /// Row `e` of the result is row `idx[e]` of `x`.
    pub fn gather(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        if let Some(&bad) = idx.iter().find(|&&i| i >= xv.rows()) {
            return Err(Error::InvalidArgument(alloc::format!(
                "gather index {bad} out of range for {} rows",
                xv.rows()
            )));
        }
        let v = xv.select_rows(idx);
        Ok(self.push(v, Op::Gather(x, idx.to_vec())))
    }

    /// Result has `n` rows; row `e` of `x` is added into row `idx[e]`.
    pub fn scatter_add(&mut self, x: Var, idx: &[usize], n: usize) -> Result<Var> {
        let xv = self.value(x);
        if idx.len() != xv.rows() || idx.iter().any(|&i| i >= n) {
            return Err(Error::InvalidArgument(alloc::format!(
                "scatter_add: {} indices for {} rows into {n}",
                idx.len(),
                xv.rows()
            )));
        }
        let mut out = Matrix::zeros(n, xv.cols());
        for (e, &i) in idx.iter().enumerate() {
            for (o, a) in out.row_mut(i).iter_mut().zip(xv.row(e)) {
                *o += a;
            }
        }
        Ok(self.push(out, Op::ScatterAdd(x, idx.to_vec())))
    }

    /// Softmax over the rows sharing a segment id, independently per column.
    pub fn segment_softmax(&mut self, x: Var, seg: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        if seg.len() != xv.rows() {
            return Err(Error::InvalidArgument(alloc::format!(
                "segment_softmax: {} segment ids for {} rows",
                seg.len(),
                xv.rows()
            )));
        }
        let mut out = Matrix::zeros(xv.rows(), xv.cols());
        for group in segments(seg) {
            softmax_group(xv, &mut out, &group);
        }
        Ok(self.push(out, Op::SegmentSoftmax(x, seg.to_vec())))
    }

    /// Row-wise softmax over the unmasked entries (`mask` true = keep);
    /// masked entries are exactly zero.
    pub fn softmax_rows(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        let xv = self.value(x);
        if mask.len() != xv.len() {
            return Err(Error::InvalidArgument(alloc::format!(
                "softmax_rows: mask of {} for {:?}",
                mask.len(),
                xv.shape()
            )));
        }
        let (rows, cols) = xv.shape();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let keep = &mask[r * cols..(r + 1) * cols];
            if !keep.iter().any(|&k| k) {
                return Err(Error::AllMaskedRow { row: r });
            }
            let max = (0..cols)
                .filter(|&c| keep[c])
                .map(|c| xv.get(r, c))
                .fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for c in (0..cols).filter(|&c| keep[c]) {
                let e = libm::exp(xv.get(r, c) - max);
                out.set(r, c, e);
                total += e;
            }
            for c in (0..cols).filter(|&c| keep[c]) {
                out.set(r, c, out.get(r, c) / total);
            }
        }
        Ok(self.push(out, Op::MaskedSoftmaxRows(x, mask.to_vec())))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts.first().map_or(0, |&p| self.value(p).rows());
        let mut cols = 0;
        for &p in parts {
            let pv = self.value(p);
            if pv.rows() != rows {
                return Err(mismatch("concat_cols", self.value(parts[0]), pv));
            }
            cols += pv.cols();
        }
        let mut out = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let pv = &self.nodes[p.0].value;
            for r in 0..rows {
                out.row_mut(r)[offset..offset + pv.cols()].copy_from_slice(pv.row(r));
            }
            offset += pv.cols();
        }
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    /// Columns `start..end` of `x`.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let xv = self.value(x);
        if start > end || end > xv.cols() {
            return Err(Error::InvalidArgument(alloc::format!(
                "slice_cols {start}..{end} of {} columns",
                xv.cols()
            )));
        }
        let out = Matrix::from_fn(xv.rows(), end - start, |r, c| xv.get(r, start + c));
        Ok(self.push(out, Op::SliceCols(x, start)))
    }

    /// Element-wise mean of equally shaped nodes.
    pub fn mean(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("mean of nothing".into()))?;
        let mut out = self.value(*first).clone();
        for &p in &parts[1..] {
            out.add_assign(self.value(p))?;
        }
        let out = out.scale(1.0 / parts.len() as f64);
        Ok(self.push(out, Op::Mean(parts.to_vec())))
    }

    /// Scalar `Σ w ∘ x`.
    pub fn weighted_sum(&mut self, x: Var, w: Matrix) -> Result<Var> {
        let xv = self.value(x);
        xv.check_same(&w, "weighted_sum")?;
        let s = xv.as_slice().iter().zip(w.as_slice()).map(|(a, b)| a * b).sum();
        Ok(self.push(Matrix::scalar(s), Op::WeightedSum(x, w)))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let (r, c) = self.value(x).shape();
        self.weighted_sum(x, Matrix::filled(r, c, 1.0))
            .expect("shape matches by construction")
    }

    /// Smallest distance of any recorded activation input to a kink
    /// (ReLU / LeakyReLU at 0, Huber at ±delta). Finite-difference checks are
    /// only meaningful when this exceeds the probe step.
    pub fn kink_margin(&self) -> f64 {
        let mut margin = f64::INFINITY;
        for node in &self.nodes {
            match &node.op {
                Op::Relu(x) | Op::LeakyRelu(x, _) => {
                    for &a in self.value(*x).as_slice() {
                        margin = margin.min(a.abs());
                    }
                }
                Op::Huber(x, delta) => {
                    for &a in self.value(*x).as_slice() {
                        margin = margin.min((a.abs() - delta).abs());
                    }
                }
                _ => {}
            }
        }
        margin
    }

    /// Reverse pass from the scalar node `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let rv = self.value(root);
        if rv.shape() != (1, 1) {
            return Err(Error::ShapeMismatch {
                op: "backward",
                lhs: rv.shape(),
                rhs: (1, 1),
            });
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Matrix::scalar(1.0));

        for id in (0..=root.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            let y = &node.value;
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(self.value(*b))?;
                    let gb = self.value(*a).t_matmul(&g)?;
                    accumulate(&mut grads, *a, ga)?;
                    accumulate(&mut grads, *b, gb)?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone())?;
                    accumulate(&mut grads, *b, g.clone())?;
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.clone())?;
                    accumulate(&mut grads, *b, g.scale(-1.0))?;
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(self.value(*b), |u, v| u * v)?;
                    let gb = g.zip_map(self.value(*a), |u, v| u * v)?;
                    accumulate(&mut grads, *a, ga)?;
                    accumulate(&mut grads, *b, gb)?;
                }
                Op::AddRow(x, b) => {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, v) in gb.row_mut(0).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    accumulate(&mut grads, *x, g.clone())?;
                    accumulate(&mut grads, *b, gb)?;
                }
                Op::MulCol(x, col) => {
                    let xv = self.value(*x);
                    let cv = self.value(*col);
                    let mut gx = g.clone();
                    let mut gc = Matrix::zeros(cv.rows(), 1);
                    for r in 0..g.rows() {
                        let s = cv.get(r, 0);
                        gx.row_mut(r).iter_mut().for_each(|o| *o *= s);
                        let dot: f64 = g.row(r).iter().zip(xv.row(r)).map(|(u, v)| u * v).sum();
                        gc.set(r, 0, dot);
                    }
                    accumulate(&mut grads, *x, gx)?;
                    accumulate(&mut grads, *col, gc)?;
                }
                Op::MulConst(x, m) => {
                    accumulate(&mut grads, *x, g.zip_map(m, |u, v| u * v)?)?;
                }
                Op::Scale(x, s) => accumulate(&mut grads, *x, g.scale(*s))?,
                Op::Relu(x) => {
                    let gx = g.zip_map(self.value(*x), |u, a| if a > 0.0 { u } else { 0.0 })?;
                    accumulate(&mut grads, *x, gx)?;
                }
                Op::LeakyRelu(x, slope) => {
                    let gx =
                        g.zip_map(self.value(*x), |u, a| if a > 0.0 { u } else { slope * u })?;
                    accumulate(&mut grads, *x, gx)?;
                }
                Op::Sigmoid(x) => {
                    let gx = g.zip_map(y, |u, s| u * s * (1.0 - s))?;
                    accumulate(&mut grads, *x, gx)?;
                }
                Op::Recip(x) => {
                    let gx = g.zip_map(y, |u, r| -u * r * r)?;
                    accumulate(&mut grads, *x, gx)?;
                }
                Op::Rsqrt(x) => {
                    let gx = g.zip_map(y, |u, r| -0.5 * u * r * r * r)?;
                    accumulate(&mut grads, *x, gx)?;
                }
                Op::Huber(x, delta) => {
                    let gx = g.zip_map(self.value(*x), |u, a| u * huber_slope(a, *delta))?;
                    accumulate(&mut grads, *x, gx)?;
                }
                Op::Gather(x, idx) => {
                    let xv = self.value(*x);
                    let mut gx = Matrix::zeros(xv.rows(), xv.cols());
                    for (e, &i) in idx.iter().enumerate() {
                        for (o, u) in gx.row_mut(i).iter_mut().zip(g.row(e)) {
                            *o += u;
                        }
                    }
                    accumulate(&mut grads, *x, gx)?;
                }
                Op::ScatterAdd(x, idx) => {
                    let gx = g.select_rows(idx);
                    accumulate(&mut grads, *x, gx)?;
                }
                Op::SegmentSoftmax(x, seg) => {
                    let mut gx = Matrix::zeros(y.rows(), y.cols());
                    for group in segments(seg) {
                        softmax_backward(&g, y, &mut gx, &group);
                    }
                    accumulate(&mut grads, *x, gx)?;
                }
                Op::MaskedSoftmaxRows(x, mask) => {
                    let (rows, cols) = y.shape();
                    let mut gx = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        let mut dot = 0.0;
                        for c in 0..cols {
                            if mask[r * cols + c] {
                                dot += g.get(r, c) * y.get(r, c);
                            }
                        }
                        for c in 0..cols {
                            if mask[r * cols + c] {
                                gx.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                            }
                        }
                    }
                    accumulate(&mut grads, *x, gx)?;
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        let gp = Matrix::from_fn(g.rows(), w, |r, c| g.get(r, offset + c));
                        accumulate(&mut grads, p, gp)?;
                        offset += w;
                    }
                }
                Op::SliceCols(x, start) => {
                    let xv = self.value(*x);
                    let mut gx = Matrix::zeros(xv.rows(), xv.cols());
                    for r in 0..g.rows() {
                        gx.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut grads, *x, gx)?;
                }
                Op::Mean(parts) => {
                    let gp = g.scale(1.0 / parts.len() as f64);
                    for &p in parts {
                        accumulate(&mut grads, p, gp.clone())?;
                    }
                }
                Op::WeightedSum(x, w) => {
                    accumulate(&mut grads, *x, w.scale(g.item()))?;
                }
            }
            grads[id] = Some(g);
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }
}

fn softmax_backward(g: &Matrix, y: &Matrix, gx: &mut Matrix, rows: &[usize]) {
    for c in 0..y.cols() {
        let dot: f64 = rows.iter().map(|&r| g.get(r, c) * y.get(r, c)).sum();
        for &r in rows {
            gx.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
        }
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) -> Result<()> {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::central_difference;

    fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-8))
            .fold(0.0, f64::max)
    }

    fn sample(rows: usize, cols: usize, seed: u64) -> Matrix {
        // Quasi-random values bounded away from zero, so no input sits on an
        // activation kink.
        Matrix::from_fn(rows, cols, |r, c| {
            let t = ((r * 31 + c * 17) as u64 * 2654435761 + seed * 97) % 1000;
            let v = t as f64 / 1000.0 * 2.0 - 1.0;
            if v.abs() < 0.05 { v + 0.1 } else { v }
        })
    }

    /// Checks d(Σ w ∘ f(x))/dx against central differences.
    fn check_unary(f: impl Fn(&mut Tape, Var) -> Var, x0: Matrix) {
        let eval = |x: &Matrix| {
            let mut t = Tape::new();
            let xv = t.leaf(x.clone());
            let y = f(&mut t, xv);
            let (r, c) = t.value(y).shape();
            let w = sample(r, c, 5).map(|v| v + 1.5);
            let s = t.weighted_sum(y, w).unwrap();
            (t, xv, s)
        };
        let (tape, xv, s) = eval(&x0);
        let analytic = tape.backward(s).unwrap().wrt(xv);
        let numeric = central_difference(
            |x| {
                let (t, _, s) = eval(x);
                t.value(s).item()
            },
            &x0,
            1e-5,
        );
        assert!(rel_err(&analytic, &numeric) < 1e-6, "{analytic:?} vs {numeric:?}");
    }

    #[test]
    fn elementwise_gradients_match_finite_differences() {
        let x = sample(3, 4, 1);
        check_unary(|t, v| t.relu(v), x.clone());
        check_unary(|t, v| t.leaky_relu(v, 0.2), x.clone());
        check_unary(|t, v| t.sigmoid(v), x.clone());
        check_unary(|t, v| t.huber(v, 0.5), x.clone());
        check_unary(|t, v| t.scale(v, -3.0), x.clone());
        let positive = x.map(|v| v.abs() + 0.5);
        check_unary(|t, v| t.recip(v), positive.clone());
        check_unary(|t, v| t.rsqrt(v), positive);
        check_unary(|t, v| t.mul(v, v).unwrap(), x);
    }

    #[test]
    fn structural_gradients_match_finite_differences() {
        let x = sample(4, 3, 2);
        check_unary(|t, v| t.gather(v, &[3, 0, 0, 2, 1]).unwrap(), x.clone());
        check_unary(|t, v| t.scatter_add(v, &[1, 1, 0, 2], 3).unwrap(), x.clone());
        check_unary(|t, v| t.segment_softmax(v, &[0, 1, 0, 1]).unwrap(), x.clone());
        check_unary(
            |t, v| {
                let mask = [true, false, true, true, true, true, false, true, true, true, true, false];
                t.softmax_rows(v, &mask).unwrap()
            },
            x.clone(),
        );
        check_unary(
            |t, v| {
                let a = t.slice_cols(v, 0, 2).unwrap();
                let b = t.slice_cols(v, 1, 3).unwrap();
                let m = t.mean(&[a, b]).unwrap();
                t.concat_cols(&[m, v]).unwrap()
            },
            x.clone(),
        );
        let col = sample(4, 1, 9);
        check_unary(
            |t, v| {
                let c = t.leaf(col.clone());
                t.mul_col(v, c).unwrap()
            },
            x.clone(),
        );
        check_unary(
            |t, v| {
                let c = t.slice_cols(v, 2, 3).unwrap();
                t.mul_col(v, c).unwrap()
            },
            x.clone(),
        );
        let bias = sample(1, 3, 4);
        check_unary(
            |t, v| {
                let b = t.leaf(bias.clone());
                t.add_row(v, b).unwrap()
            },
            x,
        );
    }

    #[test]
    fn matmul_gradients_for_both_operands() {
        let a = sample(3, 4, 3);
        let b = sample(4, 2, 6);
        check_unary(
            |t, v| {
                let bv = t.leaf(b.clone());
                t.matmul(v, bv).unwrap()
            },
            a.clone(),
        );
        check_unary(
            |t, v| {
                let av = t.leaf(a.clone());
                t.matmul(av, v).unwrap()
            },
            b,
        );
    }

    #[test]
    fn gradients_accumulate_additively() {
        let x0 = sample(2, 3, 8);
        let mut t = Tape::new();
        let x = t.leaf(x0.clone());
        let f = t.sigmoid(x);
        let fs = t.sum(f);
        let g = t.huber(x, 0.3);
        let gs = t.sum(g);
        let total = t.add(fs, gs).unwrap();
        let both = t.backward(total).unwrap().wrt(x);
        let mut sum = t.backward(fs).unwrap().wrt(x);
        sum.add_assign(&t.backward(gs).unwrap().wrt(x)).unwrap();
        assert!(both.max_abs_diff(&sum).unwrap() < 1e-15);
    }

    #[test]
    fn softmax_rows_examples() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::from_rows(&[&[0.7, 0.7], &[0.0, libm::log(3.0)], &[5.0, -2.0]]).unwrap());
        let y = t
            .softmax_rows(x, &[true, true, true, true, false, true])
            .unwrap();
        let y = t.value(y);
        assert_eq!(y.row(0), &[0.5, 0.5]);
        assert!((y.get(1, 0) - 0.25).abs() < 1e-15);
        assert!((y.get(1, 1) - 0.75).abs() < 1e-15);
        assert_eq!(y.row(2), &[0.0, 1.0]);
    }

    #[test]
    fn softmax_rows_rejects_fully_masked_row() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::zeros(2, 2));
        assert_eq!(
            t.softmax_rows(x, &[true, false, false, false]),
            Err(Error::AllMaskedRow { row: 1 })
        );
    }

    #[test]
    fn activation_fixed_points() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::from_rows(&[&[-1.0, 0.0]]).unwrap());
        let lr = t.leaky_relu(x, 0.2);
        let r = t.relu(x);
        let s = t.sigmoid(x);
        assert_eq!(t.value(lr).get(0, 0), -0.2);
        assert_eq!(t.value(r).get(0, 1), 0.0);
        assert_eq!(t.value(s).get(0, 1), 0.5);
    }

    #[test]
    fn backward_requires_scalar_root() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::zeros(2, 2));
        assert!(matches!(t.backward(x), Err(Error::ShapeMismatch { .. })));
    }
}
