//! The recording tape: eager forward evaluation, reverse-mode backward.

use std::rc::Rc;

use super::{Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Boolean keep-mask over a matrix. `false` entries behave as if their
/// logits were fixed at negative infinity: softmax output is exactly 0
/// there and no gradient flows back. Rows with no kept entry produce an
/// all-zero output row.
#[derive(Debug, Clone)]
pub struct Mask {
    rows: usize,
    cols: usize,
    keep: Vec<bool>,
}

impl Mask {
    pub fn all(rows: usize, cols: usize) -> Mask {
        Mask {
            rows,
            cols,
            keep: vec![true; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Mask {
        let mut keep = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                keep.push(f(i, j));
            }
        }
        Mask { rows, cols, keep }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn keep(&self, i: usize, j: usize) -> bool {
        self.keep[i * self.cols + j]
    }

    /// Zeroes out all dropped entries of `t`.
    pub fn apply(&self, t: &mut Tensor) {
        debug_assert_eq!((self.rows, self.cols), t.shape());
        for (v, &k) in t.data_mut().iter_mut().zip(self.keep.iter()) {
            if !k {
                *v = 0.0;
            }
        }
    }

    pub fn count_kept(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }
}

enum Op {
    Leaf,
    Constant,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    /// (m,n) + (1,n) broadcast over rows.
    AddBias(Var, Var),
    Sub(Var, Var),
    MulElem(Var, Var),
    /// 1x1 scalar var times matrix var.
    ScalarMul(Var, Var),
    MulConst(Var, f64),
    RowSoftmax(Var, Option<Rc<Mask>>),
    Relu(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
    },
    SumAll(Var),
    SumRows(Var),
    SumCols(Var),
    Abs(Var),
    Square(Var),
    TraceExpm(Var),
}

enum Aux {
    None,
    /// Per-row (mean, 1/sqrt(var+eps)) cached by layer_norm.
    LayerNorm(Vec<(f64, f64)>),
    /// Gradient basis cached by trace_expm: transpose of the truncated
    /// series sum up to K-1 terms.
    TraceExpm(Tensor),
}

struct Node {
    value: Tensor,
    op: Op,
    aux: Aux,
}

const LAYER_NORM_EPS: f64 = 1e-5;

/// Records primitives eagerly; one backward pass per forward pass.
/// In checked mode every produced value is validated to be finite.
pub struct Tape {
    nodes: Vec<Node>,
    checked: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape {
            nodes: Vec::new(),
            checked: false,
        }
    }

    pub fn checked() -> Tape {
        Tape {
            nodes: Vec::new(),
            checked: true,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Current position, for later [`Tape::truncate`].
    pub fn mark(&self) -> usize {
        self.nodes.len()
    }

    /// Drops every node recorded after `mark`. Vars handed out before the
    /// mark stay valid; vars after it must not be used again.
    pub fn truncate(&mut self, mark: usize) {
        self.nodes.truncate(mark);
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: &'static str, value: Tensor, opcode: Op, aux: Aux) -> Result<Var, TensorError> {
        if self.checked && !value.all_finite() {
            return Err(TensorError::NonFinite { op });
        }
        self.nodes.push(Node {
            value,
            op: opcode,
            aux,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A differentiable input; its gradient is reported by [`Tape::backward`].
    pub fn leaf(&mut self, value: Tensor) -> Result<Var, TensorError> {
        self.push("leaf", value, Op::Leaf, Aux::None)
    }

    /// A non-differentiable input (data, masks, noise, selectors).
    pub fn constant(&mut self, value: Tensor) -> Result<Var, TensorError> {
        self.push("constant", value, Op::Constant, Aux::None)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let v = self.value(a).matmul(self.value(b))?;
        self.push("matmul", v, Op::MatMul(a, b), Aux::None)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, TensorError> {
        let v = self.value(a).transpose();
        self.push("transpose", v, Op::Transpose(a), Aux::None)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let v = self.value(a).add(self.value(b))?;
        self.push("add", v, Op::Add(a, b), Aux::None)
    }

    /// `a + bias` where `bias` is a 1xN row broadcast over the rows of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var, TensorError> {
        let (m, n) = self.value(a).shape();
        let (br, bc) = self.value(bias).shape();
        if br != 1 || bc != n {
            return Err(TensorError::ShapeMismatch {
                op: "add_bias",
                lhs_rows: m,
                lhs_cols: n,
                rhs_rows: br,
                rhs_cols: bc,
            });
        }
        let mut v = self.value(a).clone();
        for i in 0..m {
            for j in 0..n {
                let inc = self.nodes[bias.0].value.data()[j];
                v.data_mut()[i * n + j] += inc;
            }
        }
        self.push("add_bias", v, Op::AddBias(a, bias), Aux::None)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let v = self.value(a).sub(self.value(b))?;
        self.push("sub", v, Op::Sub(a, b), Aux::None)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let v = self.value(a).mul_elem(self.value(b))?;
        self.push("mul", v, Op::MulElem(a, b), Aux::None)
    }

    /// 1x1 scalar var times matrix var.
    pub fn scalar_mul(&mut self, s: Var, m: Var) -> Result<Var, TensorError> {
        let sv = self.value(s);
        if !sv.is_scalar() {
            return Err(TensorError::ShapeMismatch {
                op: "scalar_mul",
                lhs_rows: sv.rows(),
                lhs_cols: sv.cols(),
                rhs_rows: self.value(m).rows(),
                rhs_cols: self.value(m).cols(),
            });
        }
        let c = sv.scalar_value();
        let v = self.value(m).scale(c);
        self.push("scalar_mul", v, Op::ScalarMul(s, m), Aux::None)
    }

    pub fn mul_const(&mut self, a: Var, c: f64) -> Result<Var, TensorError> {
        let v = self.value(a).scale(c);
        self.push("mul_const", v, Op::MulConst(a, c), Aux::None)
    }

    pub fn row_softmax(&mut self, a: Var) -> Result<Var, TensorError> {
        self.row_softmax_inner(a, None)
    }

    /// Row-wise softmax restricted to the kept entries of `mask`.
    pub fn masked_row_softmax(&mut self, a: Var, mask: Rc<Mask>) -> Result<Var, TensorError> {
        let (m, n) = self.value(a).shape();
        if (mask.rows(), mask.cols()) != (m, n) {
            return Err(TensorError::MaskMismatch {
                rows: m,
                cols: n,
                mask_rows: mask.rows(),
                mask_cols: mask.cols(),
            });
        }
        self.row_softmax_inner(a, Some(mask))
    }

    fn row_softmax_inner(&mut self, a: Var, mask: Option<Rc<Mask>>) -> Result<Var, TensorError> {
        let x = self.value(a);
        let (m, n) = x.shape();
        let mut v = Tensor::zeros(m, n);
        for i in 0..m {
            let row = x.row(i);
            let mut max = f64::NEG_INFINITY;
            for j in 0..n {
                if mask.as_ref().map_or(true, |k| k.keep(i, j)) {
                    max = max.max(row[j]);
                }
            }
            if max == f64::NEG_INFINITY {
                continue; // fully masked row stays zero
            }
            let mut denom = 0.0;
            for j in 0..n {
                if mask.as_ref().map_or(true, |k| k.keep(i, j)) {
                    let e = (row[j] - max).exp();
                    v.set(i, j, e);
                    denom += e;
                }
            }
            for j in 0..n {
                let val = v.get(i, j);
                if val != 0.0 {
                    v.set(i, j, val / denom);
                }
            }
        }
        self.push("row_softmax", v, Op::RowSoftmax(a, mask), Aux::None)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, TensorError> {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push("relu", v, Op::Relu(a), Aux::None)
    }

    /// Layer normalization over the feature (column) dimension of each row,
    /// with learnable 1xN scale and shift.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var, TensorError> {
        let (m, n) = self.value(x).shape();
        for (name, p) in [("gamma", gamma), ("beta", beta)] {
            let (pr, pc) = self.value(p).shape();
            if pr != 1 || pc != n {
                let _ = name;
                return Err(TensorError::ShapeMismatch {
                    op: "layer_norm",
                    lhs_rows: m,
                    lhs_cols: n,
                    rhs_rows: pr,
                    rhs_cols: pc,
                });
            }
        }
        let mut v = Tensor::zeros(m, n);
        let mut stats = Vec::with_capacity(m);
        for i in 0..m {
            let row = self.nodes[x.0].value.row(i);
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|&a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
            let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            stats.push((mean, inv_std));
            for j in 0..n {
                let xhat = (row[j] - mean) * inv_std;
                let g = self.nodes[gamma.0].value.data()[j];
                let b = self.nodes[beta.0].value.data()[j];
                v.set(i, j, g * xhat + b);
            }
        }
        self.push(
            "layer_norm",
            v,
            Op::LayerNorm { x, gamma, beta },
            Aux::LayerNorm(stats),
        )
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var, TensorError> {
        let v = Tensor::scalar(self.value(a).sum());
        self.push("sum_all", v, Op::SumAll(a), Aux::None)
    }

    /// Sum each row: (m,n) -> (m,1).
    pub fn sum_rows(&mut self, a: Var) -> Result<Var, TensorError> {
        let x = self.value(a);
        let (m, n) = x.shape();
        let mut v = Tensor::zeros(m, 1);
        for i in 0..m {
            v.data_mut()[i] = x.row(i).iter().sum();
        }
        let _ = n;
        self.push("sum_rows", v, Op::SumRows(a), Aux::None)
    }

    /// Sum each column: (m,n) -> (1,n).
    pub fn sum_cols(&mut self, a: Var) -> Result<Var, TensorError> {
        let x = self.value(a);
        let (m, n) = x.shape();
        let mut v = Tensor::zeros(1, n);
        for i in 0..m {
            for j in 0..n {
                v.data_mut()[j] += x.get(i, j);
            }
        }
        self.push("sum_cols", v, Op::SumCols(a), Aux::None)
    }

    pub fn abs(&mut self, a: Var) -> Result<Var, TensorError> {
        let v = self.value(a).map(f64::abs);
        self.push("abs", v, Op::Abs(a), Aux::None)
    }

    pub fn square(&mut self, a: Var) -> Result<Var, TensorError> {
        let v = self.value(a).map(|x| x * x);
        self.push("square", v, Op::Square(a), Aux::None)
    }

    /// tr(e^A) by truncated power series with `max(N, 30)` terms.
    ///
    /// The series is exact for DAG adjacencies (all cycle powers vanish),
    /// and the extra terms keep cyclic inputs accurate. The adjoint is the
    /// transpose of the series sum truncated one term earlier, which is the
    /// exact gradient of the truncated forward value.
    pub fn trace_expm(&mut self, a: Var) -> Result<Var, TensorError> {
        let x = self.value(a);
        let (m, n) = x.shape();
        if m != n {
            return Err(TensorError::NotSquare {
                op: "trace_expm",
                rows: m,
                cols: n,
            });
        }
        let terms = n.max(30);
        let mut power = Tensor::identity(n); // A^k / k!
        let mut trace = power.trace();
        let mut basis = Tensor::identity(n); // sum_{j<=k, j<terms} A^j / j!
        for k in 1..=terms {
            power = power.matmul(x)?;
            power = power.scale(1.0 / k as f64);
            trace += power.trace();
            if k < terms {
                basis.axpy(1.0, &power);
            }
        }
        self.push(
            "trace_expm",
            Tensor::scalar(trace),
            Op::TraceExpm(a),
            Aux::TraceExpm(basis.transpose()),
        )
    }

    /// Reverse pass from a scalar output. Returns one gradient per leaf.
    pub fn backward(&self, output: Var) -> Result<Gradients, TensorError> {
        let out_val = self.value(output);
        if !out_val.is_scalar() {
            return Err(TensorError::NonScalarBackward {
                rows: out_val.rows(),
                cols: out_val.cols(),
            });
        }
        let mut adjoints: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        adjoints[output.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=output.0).rev() {
            let grad = match adjoints[idx].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    adjoints[idx] = Some(grad);
                    continue;
                }
                Op::Constant => continue,
                Op::MatMul(a, b) => {
                    let da = grad.matmul_nt(self.value(*b))?;
                    let db = self.value(*a).matmul_tn(&grad)?;
                    self.accumulate(&mut adjoints, *a, da);
                    self.accumulate(&mut adjoints, *b, db);
                }
                Op::Transpose(a) => {
                    self.accumulate(&mut adjoints, *a, grad.transpose());
                }
                Op::Add(a, b) => {
                    self.accumulate(&mut adjoints, *a, grad.clone());
                    self.accumulate(&mut adjoints, *b, grad);
                }
                Op::AddBias(a, bias) => {
                    let (m, n) = grad.shape();
                    let mut db = Tensor::zeros(1, n);
                    for i in 0..m {
                        for j in 0..n {
                            db.data_mut()[j] += grad.get(i, j);
                        }
                    }
                    self.accumulate(&mut adjoints, *a, grad);
                    self.accumulate(&mut adjoints, *bias, db);
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut adjoints, *a, grad.clone());
                    self.accumulate(&mut adjoints, *b, grad.scale(-1.0));
                }
                Op::MulElem(a, b) => {
                    let da = grad.mul_elem(self.value(*b))?;
                    let db = grad.mul_elem(self.value(*a))?;
                    self.accumulate(&mut adjoints, *a, da);
                    self.accumulate(&mut adjoints, *b, db);
                }
                Op::ScalarMul(s, m) => {
                    let ds = Tensor::scalar(
                        grad.mul_elem(self.value(*m))?.sum(),
                    );
                    let dm = grad.scale(self.value(*s).scalar_value());
                    self.accumulate(&mut adjoints, *s, ds);
                    self.accumulate(&mut adjoints, *m, dm);
                }
                Op::MulConst(a, c) => {
                    self.accumulate(&mut adjoints, *a, grad.scale(*c));
                }
                Op::RowSoftmax(a, _mask) => {
                    // dx_j = y_j * (dy_j - sum_k dy_k y_k); masked entries have
                    // y = 0 so their slots receive zero gradient automatically.
                    let y = &node.value;
                    let (m, n) = y.shape();
                    let mut dx = Tensor::zeros(m, n);
                    for i in 0..m {
                        let yr = y.row(i);
                        let gr = grad.row(i);
                        let dot: f64 = yr.iter().zip(gr.iter()).map(|(&a, &b)| a * b).sum();
                        for j in 0..n {
                            dx.set(i, j, yr[j] * (gr[j] - dot));
                        }
                    }
                    self.accumulate(&mut adjoints, *a, dx);
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    let mut dx = grad;
                    for (g, &v) in dx.data_mut().iter_mut().zip(x.data().iter()) {
                        if v <= 0.0 {
                            *g = 0.0;
                        }
                    }
                    self.accumulate(&mut adjoints, *a, dx);
                }
                Op::LayerNorm { x, gamma, beta } => {
                    let stats = match &node.aux {
                        Aux::LayerNorm(s) => s,
                        _ => unreachable!("layer_norm aux missing"),
                    };
                    let xv = self.value(*x);
                    let gv = self.value(*gamma);
                    let (m, n) = xv.shape();
                    let nf = n as f64;
                    let mut dx = Tensor::zeros(m, n);
                    let mut dgamma = Tensor::zeros(1, n);
                    let mut dbeta = Tensor::zeros(1, n);
                    for i in 0..m {
                        let (mean, inv_std) = stats[i];
                        let xr = xv.row(i);
                        let gr = grad.row(i);
                        // dxhat and its row statistics
                        let mut sum_dxhat = 0.0;
                        let mut sum_dxhat_xhat = 0.0;
                        let mut dxhat = vec![0.0; n];
                        for j in 0..n {
                            let xhat = (xr[j] - mean) * inv_std;
                            dgamma.data_mut()[j] += gr[j] * xhat;
                            dbeta.data_mut()[j] += gr[j];
                            let d = gr[j] * gv.data()[j];
                            dxhat[j] = d;
                            sum_dxhat += d;
                            sum_dxhat_xhat += d * xhat;
                        }
                        for j in 0..n {
                            let xhat = (xr[j] - mean) * inv_std;
                            dx.set(
                                i,
                                j,
                                inv_std / nf * (nf * dxhat[j] - sum_dxhat - xhat * sum_dxhat_xhat),
                            );
                        }
                    }
                    self.accumulate(&mut adjoints, *x, dx);
                    self.accumulate(&mut adjoints, *gamma, dgamma);
                    self.accumulate(&mut adjoints, *beta, dbeta);
                }
                Op::SumAll(a) => {
                    let g = grad.scalar_value();
                    let (m, n) = self.value(*a).shape();
                    self.accumulate(&mut adjoints, *a, Tensor::fill(m, n, g));
                }
                Op::SumRows(a) => {
                    let (m, n) = self.value(*a).shape();
                    let dx = Tensor::from_fn(m, n, |i, _| grad.get(i, 0));
                    self.accumulate(&mut adjoints, *a, dx);
                }
                Op::SumCols(a) => {
                    let (m, n) = self.value(*a).shape();
                    let dx = Tensor::from_fn(m, n, |_, j| grad.get(0, j));
                    self.accumulate(&mut adjoints, *a, dx);
                }
                Op::Abs(a) => {
                    let x = self.value(*a);
                    let mut dx = grad;
                    for (g, &v) in dx.data_mut().iter_mut().zip(x.data().iter()) {
                        *g *= if v > 0.0 {
                            1.0
                        } else if v < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                    }
                    self.accumulate(&mut adjoints, *a, dx);
                }
                Op::Square(a) => {
                    let x = self.value(*a);
                    let mut dx = grad;
                    for (g, &v) in dx.data_mut().iter_mut().zip(x.data().iter()) {
                        *g *= 2.0 * v;
                    }
                    self.accumulate(&mut adjoints, *a, dx);
                }
                Op::TraceExpm(a) => {
                    let basis = match &node.aux {
                        Aux::TraceExpm(b) => b,
                        _ => unreachable!("trace_expm aux missing"),
                    };
                    self.accumulate(&mut adjoints, *a, basis.scale(grad.scalar_value()));
                }
            }
        }

        let mut grads = vec![None; self.nodes.len()];
        for (idx, adj) in adjoints.into_iter().enumerate() {
            if matches!(self.nodes[idx].op, Op::Leaf) {
                grads[idx] = adj;
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, adjoints: &mut [Option<Tensor>], target: Var, grad: Tensor) {
        match &mut adjoints[target.0] {
            Some(existing) => existing.axpy(1.0, &grad),
            slot @ None => *slot = Some(grad),
        }
    }
}

/// Gradients of a scalar output with respect to every leaf on the tape.
/// Leaves the output does not depend on report a zero gradient.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `leaf`, zero-filled when the output did not touch it.
    pub fn wrt_or_zero(&self, tape: &Tape, leaf: Var) -> Tensor {
        match self.wrt(leaf) {
            Some(g) => g.clone(),
            None => {
                let (m, n) = tape.value(leaf).shape();
                Tensor::zeros(m, n)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::finite_diff_check;

    #[test]
    fn gradient_of_sum_of_squares_is_2x() {
        let mut tape = Tape::new();
        let x = tape
            .leaf(Tensor::from_vec(2, 2, vec![1.0, -2.0, 3.0, 0.5]).unwrap())
            .unwrap();
        let sq = tape.square(x).unwrap();
        let out = tape.sum_all(sq).unwrap();
        let grads = tape.backward(out).unwrap();
        let gx = grads.wrt(x).unwrap();
        assert_eq!(gx.data(), &[2.0, -4.0, 6.0, 1.0]);
    }

    #[test]
    fn row_softmax_of_equal_logits_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::fill(1, 5, 0.7)).unwrap();
        let y = tape.row_softmax(x).unwrap();
        for &v in tape.value(y).data() {
            assert!((v - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn row_softmax_sum_has_zero_gradient() {
        // sum of a row softmax is identically 1, so the gradient vanishes
        let mut tape = Tape::new();
        let x = tape
            .leaf(Tensor::from_vec(2, 3, vec![0.3, -1.0, 2.0, 0.0, 0.1, -0.2]).unwrap())
            .unwrap();
        let y = tape.row_softmax(x).unwrap();
        let out = tape.sum_all(y).unwrap();
        let grads = tape.backward(out).unwrap();
        assert!(grads.wrt(x).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn masked_softmax_zeroes_masked_entries_and_fully_masked_rows() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::fill(2, 3, 1.0)).unwrap();
        let mask = Rc::new(Mask::from_fn(2, 3, |i, j| i == 0 && j > 0));
        let y = tape.masked_row_softmax(x, mask).unwrap();
        let v = tape.value(y);
        assert_eq!(v.get(0, 0), 0.0);
        assert!((v.get(0, 1) - 0.5).abs() < 1e-12);
        assert!((v.get(0, 2) - 0.5).abs() < 1e-12);
        assert_eq!(v.row(1), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn trace_expm_of_zero_matrix_is_n() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(4, 4)).unwrap();
        let t = tape.trace_expm(x).unwrap();
        assert!((tape.value(t).scalar_value() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn trace_expm_of_unit_two_cycle_matches_cosh() {
        let mut tape = Tape::new();
        let x = tape
            .leaf(Tensor::from_vec(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap())
            .unwrap();
        let t = tape.trace_expm(x).unwrap();
        let expected = 2.0 * 1.0_f64.cosh();
        assert!((tape.value(t).scalar_value() - expected).abs() < 1e-9);
    }

    #[test]
    fn backward_rejects_non_scalar_output() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(2, 2)).unwrap();
        let y = tape.square(x).unwrap();
        assert!(matches!(
            tape.backward(y),
            Err(TensorError::NonScalarBackward { .. })
        ));
    }

    #[test]
    fn checked_tape_rejects_non_finite() {
        let mut tape = Tape::checked();
        let err = tape.leaf(Tensor::scalar(f64::NAN)).unwrap_err();
        assert!(matches!(err, TensorError::NonFinite { .. }));
    }

    #[test]
    fn matmul_gradient_matches_finite_differences() {
        let a0 = Tensor::from_fn(3, 4, |i, j| 0.1 * (i as f64 + 1.0) - 0.2 * j as f64);
        let b0 = Tensor::from_fn(4, 2, |i, j| 0.3 * i as f64 + 0.05 * (j as f64 + 1.0));
        let weights = Tensor::from_fn(3, 2, |i, j| ((i * 2 + j) as f64).sin() + 1.5);

        let eval = |a: &Tensor| {
            let mut tape = Tape::new();
            let av = tape.leaf(a.clone()).unwrap();
            let bv = tape.constant(b0.clone()).unwrap();
            let w = tape.constant(weights.clone()).unwrap();
            let c = tape.matmul(av, bv).unwrap();
            let cw = tape.mul(c, w).unwrap();
            let out = tape.sum_all(cw).unwrap();
            tape.value(out).scalar_value()
        };
        let mut tape = Tape::new();
        let av = tape.leaf(a0.clone()).unwrap();
        let bv = tape.constant(b0.clone()).unwrap();
        let w = tape.constant(weights.clone()).unwrap();
        let c = tape.matmul(av, bv).unwrap();
        let cw = tape.mul(c, w).unwrap();
        let out = tape.sum_all(cw).unwrap();
        let grads = tape.backward(out).unwrap();
        let err = finite_diff_check(eval, &a0, grads.wrt(av).unwrap(), 1e-6);
        assert!(err < 1e-8, "matmul finite-diff error {err}");
    }
}
