//! Dense-tensor engine with reverse-mode automatic differentiation.
//!
//! Computation is recorded on a [`Tape`]: every operation appends a node
//! holding its value, its parents and whatever forward quantities the
//! backward pass needs. [`Tape::backward`] then walks the nodes in reverse
//! and accumulates gradients into every node with `requires_grad`.
//!
//! The op set is exactly what the two transformer variants need: 2-d
//! matmuls, row-wise softmax with a multiplicative gate, layer norm,
//! elementwise activations and a handful of shape ops. No broadcasting
//! beyond scalar fill and row-bias addition.

use crate::scalar::Scalar;
use thiserror::Error;

/// Handle into a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(usize);

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: expected {expected}, got shape {got:?}")]
    BadShape {
        op: &'static str,
        expected: String,
        got: Vec<usize>,
    },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("gate value {value} at ({row},{col}) outside [0,1]")]
    GateOutOfRange { row: usize, col: usize, value: f64 },
    #[error("{op}: index {index} out of bounds for shape {shape:?}")]
    IndexOutOfBounds {
        op: &'static str,
        index: usize,
        shape: Vec<usize>,
    },
}

enum Op<T: Scalar> {
    Leaf,
    Add(TensorId, TensorId),
    Sub(TensorId, TensorId),
    Mul(TensorId, TensorId),
    Div(TensorId, TensorId),
    Neg(TensorId),
    Exp(TensorId),
    Sigmoid(TensorId),
    Softplus(TensorId),
    Gelu(TensorId),
    Relu(TensorId),
    Scale(TensorId, T),
    Matmul(TensorId, TensorId),
    /// a [m,k] x b[n,k]^T -> [m,n]
    MatmulNt(TensorId, TensorId),
    Transpose(TensorId),
    Reshape(TensorId),
    SliceCols {
        src: TensorId,
        start: usize,
    },
    ConcatCols(Vec<TensorId>),
    AddRow {
        mat: TensorId,
        row: TensorId,
    },
    GatherRows {
        src: TensorId,
        rows: Vec<usize>,
    },
    BroadcastScalar(TensorId),
    Sum(TensorId),
    Mean(TensorId),
    MseLoss {
        pred: TensorId,
        target: TensorId,
    },
    SoftmaxGated {
        logits: TensorId,
        gate: TensorId,
        /// exp(logit - rowmax) and row sums, kept when a parent needs grad.
        cache: Option<(Vec<T>, Vec<T>)>,
    },
    LayerNorm {
        x: TensorId,
        scale: TensorId,
        shift: TensorId,
        x_hat: Vec<T>,
        inv_std: Vec<T>,
    },
}

struct Node<T: Scalar> {
    shape: Vec<usize>,
    data: Vec<T>,
    grad: Option<Vec<T>>,
    requires_grad: bool,
    op: Op<T>,
}

/// Reverse-mode tape. One per forward pass; models stage their parameters
/// as leaves, build the loss, call [`Tape::backward`] and read gradients
/// back out. Repeated backward calls accumulate into existing gradients.
pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
    degenerate_rows: usize,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            degenerate_rows: 0,
        }
    }

    /// Number of all-zero gate rows encountered by `softmax_gated` so far.
    /// Such rows produce an all-zero output row instead of NaN; under the
    /// mask laws used by the models every row has at least one open entry,
    /// so a nonzero count flags misuse.
    pub fn degenerate_rows(&self) -> usize {
        self.degenerate_rows
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<T>, requires_grad: bool, op: Op<T>) -> TensorId {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.nodes.push(Node {
            shape,
            data,
            grad: None,
            requires_grad,
            op,
        });
        TensorId(self.nodes.len() - 1)
    }

    fn needs_grad(&self, id: TensorId) -> bool {
        self.nodes[id.0].requires_grad
    }

    pub fn leaf(&mut self, shape: &[usize], data: Vec<T>, requires_grad: bool) -> TensorId {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "leaf data length does not match shape {shape:?}"
        );
        self.push(shape.to_vec(), data, requires_grad, Op::Leaf)
    }

    pub fn constant(&mut self, shape: &[usize], data: Vec<T>) -> TensorId {
        self.leaf(shape, data, false)
    }

    pub fn constant_from_f64(&mut self, shape: &[usize], data: &[f64]) -> TensorId {
        let cast: Vec<T> = data.iter().map(|&v| T::from_f64(v)).collect();
        self.leaf(shape, cast, false)
    }

    pub fn scalar(&mut self, value: T, requires_grad: bool) -> TensorId {
        self.leaf(&[1], vec![value], requires_grad)
    }

    pub fn value(&self, id: TensorId) -> &[T] {
        &self.nodes[id.0].data
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn grad(&self, id: TensorId) -> Option<&[T]> {
        self.nodes[id.0].grad.as_deref()
    }

    pub fn item(&self, id: TensorId) -> T {
        debug_assert_eq!(self.nodes[id.0].data.len(), 1);
        self.nodes[id.0].data[0]
    }

    fn dims2(&self, id: TensorId, op: &'static str) -> Result<(usize, usize), TensorError> {
        let s = self.shape(id);
        if s.len() != 2 {
            return Err(TensorError::BadShape {
                op,
                expected: "rank-2 tensor".into(),
                got: s.to_vec(),
            });
        }
        Ok((s[0], s[1]))
    }

    // ── Elementwise ────────────────────────────────────────────────────

    fn zip_op(
        &mut self,
        a: TensorId,
        b: TensorId,
        op_name: &'static str,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<TensorId, TensorError> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::ShapeMismatch {
                op: op_name,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let data: Vec<T> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let rg = self.needs_grad(a) || self.needs_grad(b);
        Ok(self.push(self.nodes[a.0].shape.clone(), data, rg, op))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        self.zip_op(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        self.zip_op(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        self.zip_op(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        self.zip_op(a, b, "div", |x, y| x / y, Op::Div(a, b))
    }

    fn unary_op(&mut self, a: TensorId, f: impl Fn(T) -> T, op: Op<T>) -> TensorId {
        let data: Vec<T> = self.value(a).iter().map(|&x| f(x)).collect();
        let rg = self.needs_grad(a);
        self.push(self.nodes[a.0].shape.clone(), data, rg, op)
    }

    pub fn neg(&mut self, a: TensorId) -> TensorId {
        self.unary_op(a, |x| -x, Op::Neg(a))
    }

    pub fn exp(&mut self, a: TensorId) -> TensorId {
        self.unary_op(a, |x| x.exp(), Op::Exp(a))
    }

    pub fn sigmoid(&mut self, a: TensorId) -> TensorId {
        self.unary_op(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn softplus(&mut self, a: TensorId) -> TensorId {
        self.unary_op(a, softplus, Op::Softplus(a))
    }

    pub fn gelu(&mut self, a: TensorId) -> TensorId {
        self.unary_op(a, gelu, Op::Gelu(a))
    }

    pub fn relu(&mut self, a: TensorId) -> TensorId {
        self.unary_op(a, |x| if x > T::zero() { x } else { T::zero() }, Op::Relu(a))
    }

    pub fn scale(&mut self, a: TensorId, c: T) -> TensorId {
        self.unary_op(a, |x| x * c, Op::Scale(a, c))
    }

    // ── Matrix ops ────────────────────────────────────────────────────

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        let (m, k) = self.dims2(a, "matmul")?;
        let (kb, n) = self.dims2(b, "matmul")?;
        if k != kb {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: vec![m, k],
                rhs: vec![kb, n],
            });
        }
        let data = mm(self.value(a), self.value(b), m, k, n);
        let rg = self.needs_grad(a) || self.needs_grad(b);
        Ok(self.push(vec![m, n], data, rg, Op::Matmul(a, b)))
    }

    /// `a [m,k] · b[n,k]ᵀ -> [m,n]`; saves a transpose in attention scores.
    pub fn matmul_nt(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        let (m, k) = self.dims2(a, "matmul_nt")?;
        let (n, kb) = self.dims2(b, "matmul_nt")?;
        if k != kb {
            return Err(TensorError::ShapeMismatch {
                op: "matmul_nt",
                lhs: vec![m, k],
                rhs: vec![n, kb],
            });
        }
        let data = mm_a_bt(self.value(a), self.value(b), m, k, n);
        let rg = self.needs_grad(a) || self.needs_grad(b);
        Ok(self.push(vec![m, n], data, rg, Op::MatmulNt(a, b)))
    }

    pub fn transpose(&mut self, a: TensorId) -> Result<TensorId, TensorError> {
        let (m, n) = self.dims2(a, "transpose")?;
        let src = self.value(a);
        let mut data = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = src[i * n + j];
            }
        }
        let rg = self.needs_grad(a);
        Ok(self.push(vec![n, m], data, rg, Op::Transpose(a)))
    }

    pub fn reshape(&mut self, a: TensorId, shape: &[usize]) -> Result<TensorId, TensorError> {
        let numel: usize = shape.iter().product();
        if numel != self.value(a).len() {
            return Err(TensorError::BadShape {
                op: "reshape",
                expected: format!("shape with {} elements", self.value(a).len()),
                got: shape.to_vec(),
            });
        }
        let data = self.value(a).to_vec();
        let rg = self.needs_grad(a);
        Ok(self.push(shape.to_vec(), data, rg, Op::Reshape(a)))
    }

    pub fn slice_cols(
        &mut self,
        a: TensorId,
        start: usize,
        width: usize,
    ) -> Result<TensorId, TensorError> {
        let (m, n) = self.dims2(a, "slice_cols")?;
        if start + width > n {
            return Err(TensorError::IndexOutOfBounds {
                op: "slice_cols",
                index: start + width,
                shape: vec![m, n],
            });
        }
        let src = self.value(a);
        let mut data = Vec::with_capacity(m * width);
        for i in 0..m {
            data.extend_from_slice(&src[i * n + start..i * n + start + width]);
        }
        let rg = self.needs_grad(a);
        Ok(self.push(vec![m, width], data, rg, Op::SliceCols { src: a, start }))
    }

    pub fn concat_cols(&mut self, parts: &[TensorId]) -> Result<TensorId, TensorError> {
        assert!(!parts.is_empty(), "concat_cols needs at least one part");
        let (m, _) = self.dims2(parts[0], "concat_cols")?;
        let mut total = 0;
        for &p in parts {
            let (mp, np) = self.dims2(p, "concat_cols")?;
            if mp != m {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: self.shape(parts[0]).to_vec(),
                    rhs: self.shape(p).to_vec(),
                });
            }
            total += np;
        }
        let mut data = Vec::with_capacity(m * total);
        for i in 0..m {
            for &p in parts {
                let np = self.shape(p)[1];
                let src = self.value(p);
                data.extend_from_slice(&src[i * np..(i + 1) * np]);
            }
        }
        let rg = parts.iter().any(|&p| self.needs_grad(p));
        Ok(self.push(vec![m, total], data, rg, Op::ConcatCols(parts.to_vec())))
    }

    /// `mat [m,n] + row [n]` broadcast over rows (bias add).
    pub fn add_row(&mut self, mat: TensorId, row: TensorId) -> Result<TensorId, TensorError> {
        let (m, n) = self.dims2(mat, "add_row")?;
        if self.shape(row) != [n] {
            return Err(TensorError::ShapeMismatch {
                op: "add_row",
                lhs: vec![m, n],
                rhs: self.shape(row).to_vec(),
            });
        }
        let r = self.value(row).to_vec();
        let src = self.value(mat);
        let mut data = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                data.push(src[i * n + j] + r[j]);
            }
        }
        let rg = self.needs_grad(mat) || self.needs_grad(row);
        Ok(self.push(vec![m, n], data, rg, Op::AddRow { mat, row }))
    }

    pub fn gather_rows(&mut self, a: TensorId, rows: &[usize]) -> Result<TensorId, TensorError> {
        let (m, n) = self.dims2(a, "gather_rows")?;
        for &r in rows {
            if r >= m {
                return Err(TensorError::IndexOutOfBounds {
                    op: "gather_rows",
                    index: r,
                    shape: vec![m, n],
                });
            }
        }
        let src = self.value(a);
        let mut data = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            data.extend_from_slice(&src[r * n..(r + 1) * n]);
        }
        let rg = self.needs_grad(a);
        Ok(self.push(
            vec![rows.len(), n],
            data,
            rg,
            Op::GatherRows {
                src: a,
                rows: rows.to_vec(),
            },
        ))
    }

    /// Fill `shape` with the single element of `a [1]`.
    pub fn broadcast_scalar(
        &mut self,
        a: TensorId,
        shape: &[usize],
    ) -> Result<TensorId, TensorError> {
        if self.value(a).len() != 1 {
            return Err(TensorError::BadShape {
                op: "broadcast_scalar",
                expected: "single-element tensor".into(),
                got: self.shape(a).to_vec(),
            });
        }
        let v = self.value(a)[0];
        let numel: usize = shape.iter().product();
        let rg = self.needs_grad(a);
        Ok(self.push(shape.to_vec(), vec![v; numel], rg, Op::BroadcastScalar(a)))
    }

    // ── Reductions and losses ─────────────────────────────────────────

    pub fn sum(&mut self, a: TensorId) -> TensorId {
        let s: T = self.value(a).iter().copied().sum();
        let rg = self.needs_grad(a);
        self.push(vec![1], vec![s], rg, Op::Sum(a))
    }

    pub fn mean(&mut self, a: TensorId) -> TensorId {
        let n = T::from_f64(self.value(a).len() as f64);
        let s: T = self.value(a).iter().copied().sum();
        let rg = self.needs_grad(a);
        self.push(vec![1], vec![s / n], rg, Op::Mean(a))
    }

    /// Mean squared error over all elements of two same-shape tensors.
    pub fn mse_loss(&mut self, pred: TensorId, target: TensorId) -> Result<TensorId, TensorError> {
        if self.shape(pred) != self.shape(target) {
            return Err(TensorError::ShapeMismatch {
                op: "mse_loss",
                lhs: self.shape(pred).to_vec(),
                rhs: self.shape(target).to_vec(),
            });
        }
        let n = T::from_f64(self.value(pred).len() as f64);
        let s: T = self
            .value(pred)
            .iter()
            .zip(self.value(target))
            .map(|(&p, &t)| (p - t) * (p - t))
            .sum();
        let rg = self.needs_grad(pred) || self.needs_grad(target);
        Ok(self.push(vec![1], vec![s / n], rg, Op::MseLoss { pred, target }))
    }

    /// Row-wise softmax of `logits [n,n]` with a multiplicative gate in [0,1]
    /// applied after exponentiation, then renormalized. Entries with gate
    /// exactly 0 come out exactly 0, so masked keys cannot leak; those
    /// entries are treated as hard masks, including in the gate gradient.
    /// An all-zero gate row yields an all-zero output row and bumps the
    /// degenerate-row counter.
    pub fn softmax_gated(
        &mut self,
        logits: TensorId,
        gate: TensorId,
    ) -> Result<TensorId, TensorError> {
        let (m, n) = self.dims2(logits, "softmax_gated")?;
        if self.shape(gate) != [m, n] {
            return Err(TensorError::ShapeMismatch {
                op: "softmax_gated",
                lhs: vec![m, n],
                rhs: self.shape(gate).to_vec(),
            });
        }
        for (idx, &g) in self.value(gate).iter().enumerate() {
            if !(g >= T::zero() && g <= T::one()) {
                return Err(TensorError::GateOutOfRange {
                    row: idx / n,
                    col: idx % n,
                    value: g.as_f64(),
                });
            }
        }
        let rg = self.needs_grad(logits) || self.needs_grad(gate);
        let l = self.value(logits);
        let g = self.value(gate);
        let mut out = vec![T::zero(); m * n];
        let mut exps = vec![T::zero(); m * n];
        let mut sums = vec![T::zero(); m];
        let mut degenerate = 0usize;
        for r in 0..m {
            let lr = &l[r * n..(r + 1) * n];
            let gr = &g[r * n..(r + 1) * n];
            // row max over open entries only: a masked logit must not be
            // able to shift anything, not even by a rounding step
            let mut mx = T::neg_infinity();
            for j in 0..n {
                if gr[j] != T::zero() && lr[j] > mx {
                    mx = lr[j];
                }
            }
            let er = &mut exps[r * n..(r + 1) * n];
            let mut s = T::zero();
            for j in 0..n {
                // hard-masked entries never need their exponential; their
                // gate gradient is reported as 0 (the mask kills it anyway)
                if gr[j] == T::zero() {
                    continue;
                }
                let e = (lr[j] - mx).fexp();
                er[j] = e;
                s += gr[j] * e;
            }
            sums[r] = s;
            let or = &mut out[r * n..(r + 1) * n];
            if s > T::zero() {
                for j in 0..n {
                    // gate of exactly 0 forces an exact 0 output
                    or[j] = if gr[j] == T::zero() {
                        T::zero()
                    } else {
                        gr[j] * er[j] / s
                    };
                }
            } else {
                degenerate += 1;
            }
        }
        self.degenerate_rows += degenerate;
        let cache = if rg { Some((exps, sums)) } else { None };
        Ok(self.push(
            vec![m, n],
            out,
            rg,
            Op::SoftmaxGated {
                logits,
                gate,
                cache,
            },
        ))
    }

    /// Last-axis normalization to zero mean and unit variance (eps under the
    /// square root), followed by an elementwise affine `scale`/`shift`.
    pub fn layer_norm(
        &mut self,
        x: TensorId,
        scale: TensorId,
        shift: TensorId,
        eps: f64,
    ) -> Result<TensorId, TensorError> {
        let xs = self.shape(x).to_vec();
        let d = *xs.last().ok_or_else(|| TensorError::BadShape {
            op: "layer_norm",
            expected: "rank >= 1".into(),
            got: xs.clone(),
        })?;
        if self.shape(scale) != [d] || self.shape(shift) != [d] {
            return Err(TensorError::ShapeMismatch {
                op: "layer_norm",
                lhs: xs,
                rhs: self.shape(scale).to_vec(),
            });
        }
        let rows = self.value(x).len() / d;
        let eps = T::from_f64(eps);
        let inv_d = T::one() / T::from_f64(d as f64);
        let xv = self.value(x);
        let sc = self.value(scale);
        let sh = self.value(shift);
        let mut out = vec![T::zero(); rows * d];
        let mut x_hat = vec![T::zero(); rows * d];
        let mut inv_std = vec![T::zero(); rows];
        for r in 0..rows {
            let xr = &xv[r * d..(r + 1) * d];
            let mut mean = T::zero();
            for &v in xr {
                mean += v;
            }
            mean *= inv_d;
            let mut var = T::zero();
            for &v in xr {
                let c = v - mean;
                var += c * c;
            }
            var *= inv_d;
            let istd = T::one() / (var + eps).sqrt();
            inv_std[r] = istd;
            for j in 0..d {
                let h = (xr[j] - mean) * istd;
                x_hat[r * d + j] = h;
                out[r * d + j] = h * sc[j] + sh[j];
            }
        }
        let rg = self.needs_grad(x) || self.needs_grad(scale) || self.needs_grad(shift);
        Ok(self.push(
            self.nodes[x.0].shape.clone(),
            out,
            rg,
            Op::LayerNorm {
                x,
                scale,
                shift,
                x_hat,
                inv_std,
            },
        ))
    }

    // ── Backward ──────────────────────────────────────────────────────

    /// Reverse-mode accumulation from a scalar loss. Gradients land in the
    /// `grad` buffer of every `requires_grad` node reachable from the loss;
    /// calling backward again without clearing adds on top.
    pub fn backward(&mut self, loss: TensorId) -> Result<(), TensorError> {
        if self.value(loss).len() != 1 {
            return Err(TensorError::NonScalarLoss(self.shape(loss).to_vec()));
        }
        let n_nodes = self.nodes.len();
        let mut grads: Vec<Option<Vec<T>>> = vec![None; n_nodes];
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..n_nodes).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut grads);
            match &mut self.nodes[i].grad {
                Some(acc) => {
                    for (a, v) in acc.iter_mut().zip(&g) {
                        *a += *v;
                    }
                }
                slot => *slot = Some(g),
            }
        }
        Ok(())
    }

    fn accumulate(&self, grads: &mut [Option<Vec<T>>], id: TensorId, contrib: Vec<T>) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        match &mut grads[id.0] {
            Some(acc) => {
                for (a, v) in acc.iter_mut().zip(&contrib) {
                    *a += *v;
                }
            }
            slot => *slot = Some(contrib),
        }
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.to_vec());
                self.accumulate(grads, *b, g.to_vec());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.to_vec());
                self.accumulate(grads, *b, g.iter().map(|&v| -v).collect());
            }
            Op::Mul(a, b) => {
                let bv = self.value(*b);
                let av = self.value(*a);
                self.accumulate(grads, *a, g.iter().zip(bv).map(|(&u, &y)| u * y).collect());
                self.accumulate(grads, *b, g.iter().zip(av).map(|(&u, &x)| u * x).collect());
            }
            Op::Div(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                self.accumulate(grads, *a, g.iter().zip(bv).map(|(&u, &y)| u / y).collect());
                self.accumulate(
                    grads,
                    *b,
                    g.iter()
                        .zip(av.iter().zip(bv))
                        .map(|(&u, (&x, &y))| -u * x / (y * y))
                        .collect(),
                );
            }
            Op::Neg(a) => self.accumulate(grads, *a, g.iter().map(|&v| -v).collect()),
            Op::Exp(a) => {
                let out = &self.nodes[i].data;
                self.accumulate(grads, *a, g.iter().zip(out).map(|(&u, &y)| u * y).collect());
            }
            Op::Sigmoid(a) => {
                let out = &self.nodes[i].data;
                self.accumulate(
                    grads,
                    *a,
                    g.iter()
                        .zip(out)
                        .map(|(&u, &y)| u * y * (T::one() - y))
                        .collect(),
                );
            }
            Op::Softplus(a) => {
                let xv = self.value(*a);
                self.accumulate(
                    grads,
                    *a,
                    g.iter()
                        .zip(xv)
                        .map(|(&u, &x)| u * sigmoid(x))
                        .collect(),
                );
            }
            Op::Gelu(a) => {
                let xv = self.value(*a);
                self.accumulate(
                    grads,
                    *a,
                    g.iter()
                        .zip(xv)
                        .map(|(&u, &x)| u * gelu_deriv(x))
                        .collect(),
                );
            }
            Op::Relu(a) => {
                let xv = self.value(*a);
                self.accumulate(
                    grads,
                    *a,
                    g.iter()
                        .zip(xv)
                        .map(|(&u, &x)| if x > T::zero() { u } else { T::zero() })
                        .collect(),
                );
            }
            Op::Scale(a, c) => {
                self.accumulate(grads, *a, g.iter().map(|&u| u * *c).collect());
            }
            Op::Matmul(a, b) => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                if self.needs_grad(*a) {
                    // dA = dC · Bᵀ
                    let da = mm_a_bt(g, self.value(*b), m, n, k);
                    self.accumulate(grads, *a, da);
                }
                if self.needs_grad(*b) {
                    // dB = Aᵀ · dC
                    let db = mm_at_b(self.value(*a), g, m, k, n);
                    self.accumulate(grads, *b, db);
                }
            }
            Op::MatmulNt(a, b) => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[0];
                if self.needs_grad(*a) {
                    // dA = dC · B
                    let da = mm(g, self.value(*b), m, n, k);
                    self.accumulate(grads, *a, da);
                }
                if self.needs_grad(*b) {
                    // dB = dCᵀ · A
                    let db = mm_at_b(g, self.value(*a), m, n, k);
                    self.accumulate(grads, *b, db);
                }
            }
            Op::Transpose(a) => {
                let (n, m) = (self.nodes[i].shape[0], self.nodes[i].shape[1]);
                let mut da = vec![T::zero(); m * n];
                for r in 0..n {
                    for c in 0..m {
                        da[c * n + r] = g[r * m + c];
                    }
                }
                self.accumulate(grads, *a, da);
            }
            Op::Reshape(a) => self.accumulate(grads, *a, g.to_vec()),
            Op::SliceCols { src, start } => {
                let (m, n) = (self.shape(*src)[0], self.shape(*src)[1]);
                let width = self.nodes[i].shape[1];
                let mut da = vec![T::zero(); m * n];
                for r in 0..m {
                    for c in 0..width {
                        da[r * n + start + c] = g[r * width + c];
                    }
                }
                self.accumulate(grads, *src, da);
            }
            Op::ConcatCols(parts) => {
                let m = self.nodes[i].shape[0];
                let total = self.nodes[i].shape[1];
                let mut offset = 0;
                for &p in parts {
                    let np = self.shape(p)[1];
                    if self.needs_grad(p) {
                        let mut dp = vec![T::zero(); m * np];
                        for r in 0..m {
                            dp[r * np..(r + 1) * np]
                                .copy_from_slice(&g[r * total + offset..r * total + offset + np]);
                        }
                        self.accumulate(grads, p, dp);
                    }
                    offset += np;
                }
            }
            Op::AddRow { mat, row } => {
                let (m, n) = (self.nodes[i].shape[0], self.nodes[i].shape[1]);
                self.accumulate(grads, *mat, g.to_vec());
                if self.needs_grad(*row) {
                    let mut dr = vec![T::zero(); n];
                    for r in 0..m {
                        for c in 0..n {
                            dr[c] += g[r * n + c];
                        }
                    }
                    self.accumulate(grads, *row, dr);
                }
            }
            Op::GatherRows { src, rows } => {
                let (m, n) = (self.shape(*src)[0], self.shape(*src)[1]);
                let mut da = vec![T::zero(); m * n];
                for (out_r, &src_r) in rows.iter().enumerate() {
                    for c in 0..n {
                        da[src_r * n + c] += g[out_r * n + c];
                    }
                }
                self.accumulate(grads, *src, da);
            }
            Op::BroadcastScalar(a) => {
                let s: T = g.iter().copied().sum();
                self.accumulate(grads, *a, vec![s]);
            }
            Op::Sum(a) => {
                let n = self.value(*a).len();
                self.accumulate(grads, *a, vec![g[0]; n]);
            }
            Op::Mean(a) => {
                let n = self.value(*a).len();
                let v = g[0] / T::from_f64(n as f64);
                self.accumulate(grads, *a, vec![v; n]);
            }
            Op::MseLoss { pred, target } => {
                let p = self.value(*pred);
                let t = self.value(*target);
                let n = T::from_f64(p.len() as f64);
                let c = g[0] * T::from_f64(2.0) / n;
                if self.needs_grad(*pred) {
                    self.accumulate(
                        grads,
                        *pred,
                        p.iter().zip(t).map(|(&pv, &tv)| c * (pv - tv)).collect(),
                    );
                }
                if self.needs_grad(*target) {
                    self.accumulate(
                        grads,
                        *target,
                        p.iter().zip(t).map(|(&pv, &tv)| -c * (pv - tv)).collect(),
                    );
                }
            }
            Op::SoftmaxGated {
                logits,
                gate,
                cache,
            } => {
                let (exps, sums) = cache
                    .as_ref()
                    .expect("softmax_gated cache present when a parent needs grad");
                let n = self.nodes[i].shape[1];
                let m = self.nodes[i].shape[0];
                let y = &self.nodes[i].data;
                let need_l = self.needs_grad(*logits);
                let need_g = self.needs_grad(*gate);
                let mut dl = if need_l { vec![T::zero(); m * n] } else { Vec::new() };
                let mut dg = if need_g { vec![T::zero(); m * n] } else { Vec::new() };
                for r in 0..m {
                    let s = sums[r];
                    if s <= T::zero() {
                        continue; // degenerate row: zero output, zero grads
                    }
                    let yr = &y[r * n..(r + 1) * n];
                    let ur = &g[r * n..(r + 1) * n];
                    let mut c = T::zero();
                    for j in 0..n {
                        c += ur[j] * yr[j];
                    }
                    if need_l {
                        let dlr = &mut dl[r * n..(r + 1) * n];
                        for j in 0..n {
                            dlr[j] = yr[j] * (ur[j] - c);
                        }
                    }
                    if need_g {
                        let er = &exps[r * n..(r + 1) * n];
                        let dgr = &mut dg[r * n..(r + 1) * n];
                        for j in 0..n {
                            dgr[j] = er[j] * (ur[j] - c) / s;
                        }
                    }
                }
                if need_l {
                    self.accumulate(grads, *logits, dl);
                }
                if need_g {
                    self.accumulate(grads, *gate, dg);
                }
            }
            Op::LayerNorm {
                x,
                scale,
                shift,
                x_hat,
                inv_std,
            } => {
                let d = *self.nodes[i].shape.last().unwrap();
                let rows = self.nodes[i].data.len() / d;
                let sc = self.value(*scale);
                let inv_d = T::one() / T::from_f64(d as f64);
                if self.needs_grad(*scale) {
                    let mut ds = vec![T::zero(); d];
                    for r in 0..rows {
                        for j in 0..d {
                            ds[j] += g[r * d + j] * x_hat[r * d + j];
                        }
                    }
                    self.accumulate(grads, *scale, ds);
                }
                if self.needs_grad(*shift) {
                    let mut dsh = vec![T::zero(); d];
                    for r in 0..rows {
                        for j in 0..d {
                            dsh[j] += g[r * d + j];
                        }
                    }
                    self.accumulate(grads, *shift, dsh);
                }
                if self.needs_grad(*x) {
                    let mut dx = vec![T::zero(); rows * d];
                    for r in 0..rows {
                        let gr = &g[r * d..(r + 1) * d];
                        let hr = &x_hat[r * d..(r + 1) * d];
                        let mut mean_dh = T::zero();
                        let mut mean_dh_h = T::zero();
                        for j in 0..d {
                            let dh = gr[j] * sc[j];
                            mean_dh += dh;
                            mean_dh_h += dh * hr[j];
                        }
                        mean_dh *= inv_d;
                        mean_dh_h *= inv_d;
                        let istd = inv_std[r];
                        for j in 0..d {
                            let dh = gr[j] * sc[j];
                            dx[r * d + j] = istd * (dh - mean_dh - hr[j] * mean_dh_h);
                        }
                    }
                    self.accumulate(grads, *x, dx);
                }
            }
        }
    }
}

// ── Scalar math shared with the non-tape paths ───────────────────────

/// Numerically stable logistic function.
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).fexp())
    } else {
        let e = x.fexp();
        e / (T::one() + e)
    }
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus<T: Scalar>(x: T) -> T {
    let zero = T::zero();
    let m = if x > zero { x } else { zero };
    m + ((-x.abs()).fexp()).ln_1p()
}

/// GELU, tanh approximation.
pub fn gelu<T: Scalar>(x: T) -> T {
    let c = T::from_f64(0.797_884_560_802_865_4); // sqrt(2/pi)
    let a = T::from_f64(0.044_715);
    let half = T::from_f64(0.5);
    half * x * (T::one() + (c * (x + a * x * x * x)).ftanh())
}

fn gelu_deriv<T: Scalar>(x: T) -> T {
    let c = T::from_f64(0.797_884_560_802_865_4);
    let a = T::from_f64(0.044_715);
    let half = T::from_f64(0.5);
    let three = T::from_f64(3.0);
    let inner = c * (x + a * x * x * x);
    let t = inner.ftanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + three * a * x * x)
}

// ── Raw row-major matmul kernels ─────────────────────────────────────
//
// ikj / dot-product loop orders keep the inner loop unit-stride so the
// compiler can vectorize them. These three cover every forward and VJP
// case without materializing transposes.

/// C[m,n] = A[m,k] · B[k,n]
pub fn mm<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let c_row = &mut c[i * n..(i + 1) * n];
        for (p, &a_ip) in a_row.iter().enumerate() {
            // masked attention rows are mostly exact zeros
            if a_ip == T::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += a_ip * bv;
            }
        }
    }
    c
}

/// C[m,n] = A[m,k] · B[n,k]ᵀ. Materializes Bᵀ first: the transpose is
/// cheap next to the product and keeps the inner loop unit-stride.
pub fn mm_a_bt<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut bt = vec![T::zero(); k * n];
    for j in 0..n {
        for p in 0..k {
            bt[p * n + j] = b[j * k + p];
        }
    }
    mm(a, &bt, m, k, n)
}

/// C[k,n] = A[m,k]ᵀ · B[m,n]
pub fn mm_at_b<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); k * n];
    for p in 0..m {
        let a_row = &a[p * k..(p + 1) * k];
        let b_row = &b[p * n..(p + 1) * n];
        for (i, &a_pi) in a_row.iter().enumerate() {
            if a_pi == T::zero() {
                continue;
            }
            let c_row = &mut c[i * n..(i + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += a_pi * bv;
            }
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tape() -> Tape<f64> {
        Tape::new()
    }

    #[test]
    fn matmul_identity() {
        let mut t = tape();
        let i2 = t.constant(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        let a = t.constant(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let c = t.matmul(i2, a).unwrap();
        assert_eq!(t.value(c), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn matmul_1x2_2x1() {
        let mut t = tape();
        let a = t.constant(&[1, 2], vec![1.0, 2.0]);
        let b = t.constant(&[2, 1], vec![3.0, 4.0]);
        let c = t.matmul(a, b).unwrap();
        assert_eq!(t.value(c), &[11.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut t = tape();
        let a = t.constant(&[2, 3], vec![0.0; 6]);
        let b = t.constant(&[2, 2], vec![0.0; 4]);
        let err = t.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{msg}");
    }

    #[test]
    fn matmul_grad_of_sum_is_ones_times_bt() {
        let mut t = tape();
        let a = t.leaf(&[2, 2], vec![1.0, 2.0, 3.0, 4.0], true);
        let b = t.constant(&[2, 2], vec![5.0, 6.0, 7.0, 8.0]);
        let c = t.matmul(a, b).unwrap();
        let loss = t.sum(c);
        t.backward(loss).unwrap();
        // ones[2,2] · Bᵀ
        let expect = mm_a_bt(&[1.0f64; 4], &[5.0, 6.0, 7.0, 8.0], 2, 2, 2);
        assert_eq!(t.grad(a).unwrap(), expect.as_slice());
    }

    #[test]
    fn softmax_gated_uniform() {
        let mut t = tape();
        let l = t.constant(&[4, 4], vec![0.0; 16]);
        let g = t.constant(&[4, 4], vec![1.0; 16]);
        let y = t.softmax_gated(l, g).unwrap();
        for &v in t.value(y) {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_gated_renormalizes_and_zeroes() {
        let mut t = tape();
        let l = t.constant(&[1, 4], vec![0.0; 4]);
        let g = t.constant(&[1, 4], vec![1.0, 1.0, 0.0, 0.0]);
        let y = t.softmax_gated(l, g).unwrap();
        let v = t.value(y);
        assert!((v[0] - 0.5).abs() < 1e-15);
        assert!((v[1] - 0.5).abs() < 1e-15);
        assert_eq!(v[2], 0.0);
        assert_eq!(v[3], 0.0);
    }

    #[test]
    fn softmax_gated_hand_value() {
        let mut t = tape();
        let l = t.constant(&[1, 2], vec![0.0, 3.0f64.ln()]);
        let g = t.constant(&[1, 2], vec![1.0, 1.0]);
        let y = t.softmax_gated(l, g).unwrap();
        let v = t.value(y);
        assert!((v[0] - 0.25).abs() < 1e-12);
        assert!((v[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn softmax_gated_zero_row_is_zero_and_counted() {
        let mut t = tape();
        let l = t.constant(&[2, 2], vec![0.0; 4]);
        let g = t.constant(&[2, 2], vec![0.0, 0.0, 1.0, 1.0]);
        let y = t.softmax_gated(l, g).unwrap();
        assert_eq!(&t.value(y)[..2], &[0.0, 0.0]);
        assert_eq!(t.degenerate_rows(), 1);
    }

    #[test]
    fn softmax_gated_rejects_gate_outside_unit_interval() {
        let mut t = tape();
        let l = t.constant(&[1, 2], vec![0.0, 0.0]);
        let g = t.constant(&[1, 2], vec![1.5, 0.5]);
        assert!(t.softmax_gated(l, g).is_err());
    }

    #[test]
    fn layer_norm_constant_row_is_zero() {
        let mut t = tape();
        let x = t.constant(&[1, 3], vec![5.0, 5.0, 5.0]);
        let sc = t.constant(&[3], vec![1.0; 3]);
        let sh = t.constant(&[3], vec![0.0; 3]);
        let y = t.layer_norm(x, sc, sh, 1e-5).unwrap();
        for &v in t.value(y) {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn layer_norm_two_point_row() {
        let mut t = tape();
        let x = t.constant(&[1, 2], vec![1.0, 3.0]);
        let sc = t.constant(&[2], vec![1.0; 2]);
        let sh = t.constant(&[2], vec![0.0; 2]);
        let y = t.layer_norm(x, sc, sh, 1e-5).unwrap();
        let v = t.value(y);
        assert!((v[0] + 1.0).abs() < 1e-4);
        assert!((v[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn layer_norm_gradient_matches_finite_differences() {
        let x0 = [0.3, -1.1, 0.7, 2.0, -0.4, 0.05];
        let sc0 = [1.2, 0.8, 1.0];
        let sh0 = [0.1, -0.2, 0.0];
        let theta: Vec<f64> = x0.iter().chain(&sc0).chain(&sh0).copied().collect();
        let report = crate::gradcheck::check_gradient(&theta, 1e-5, |v, want| {
            let mut t: Tape<f64> = Tape::new();
            let x = t.leaf(&[2, 3], v[..6].to_vec(), true);
            let sc = t.leaf(&[3], v[6..9].to_vec(), true);
            let sh = t.leaf(&[3], v[9..].to_vec(), true);
            let y = t.layer_norm(x, sc, sh, 1e-5).unwrap();
            let w = t.constant(&[2, 3], vec![0.7, -0.3, 0.2, 1.1, -0.8, 0.4]);
            let p = t.mul(y, w).unwrap();
            let loss = t.sum(p);
            if want {
                t.backward(loss).unwrap();
                let mut g = t.grad(x).unwrap().to_vec();
                g.extend_from_slice(t.grad(sc).unwrap());
                g.extend_from_slice(t.grad(sh).unwrap());
                (t.item(loss), Some(g))
            } else {
                (t.item(loss), None)
            }
        });
        assert!(report.passes(1e-4), "{report:?}");
    }

    #[test]
    fn gelu_values() {
        assert_eq!(gelu(0.0f64), 0.0);
        assert!((gelu(1.0f64) - 0.8412).abs() < 1e-4);
        assert!((gelu(20.0f64) - 20.0).abs() < 1e-9);
    }

    #[test]
    fn mse_loss_values() {
        let mut t = tape();
        let p = t.constant(&[2], vec![1.0, 1.0]);
        let q = t.constant(&[2], vec![1.0, 1.0]);
        let l = t.mse_loss(p, q).unwrap();
        assert_eq!(t.item(l), 0.0);

        let p = t.constant(&[2], vec![1.0, 1.0]);
        let q = t.constant(&[2], vec![0.0, 2.0]);
        let l = t.mse_loss(p, q).unwrap();
        assert_eq!(t.item(l), 1.0);
    }

    #[test]
    fn mse_grad_matches_formula() {
        let mut t = tape();
        let p = t.leaf(&[3], vec![1.0, 2.0, 3.0], true);
        let q = t.constant(&[3], vec![0.5, 2.5, 2.0]);
        let l = t.mse_loss(p, q).unwrap();
        t.backward(l).unwrap();
        let g = t.grad(p).unwrap();
        for (j, &gv) in g.iter().enumerate() {
            let expect = 2.0 * (t.value(p)[j] - t.value(q)[j]) / 3.0;
            assert!((gv - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn backward_sum_gives_ones() {
        let mut t = tape();
        let x = t.leaf(&[4], vec![1.0, -2.0, 0.5, 9.0], true);
        let l = t.sum(x);
        t.backward(l).unwrap();
        assert_eq!(t.grad(x).unwrap(), &[1.0; 4]);
    }

    #[test]
    fn backward_sum_of_squares_gives_two_x() {
        let mut t = tape();
        let x = t.leaf(&[3], vec![1.0, -2.0, 0.5], true);
        let sq = t.mul(x, x).unwrap();
        let l = t.sum(sq);
        t.backward(l).unwrap();
        let g = t.grad(x).unwrap();
        assert_eq!(g, &[2.0, -4.0, 1.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut t = tape();
        let x = t.leaf(&[2], vec![1.0, 2.0], true);
        assert!(matches!(
            t.backward(x),
            Err(TensorError::NonScalarLoss(_))
        ));
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut t = tape();
        let x = t.leaf(&[2], vec![1.0, 2.0], true);
        let l = t.sum(x);
        t.backward(l).unwrap();
        t.backward(l).unwrap();
        assert_eq!(t.grad(x).unwrap(), &[2.0, 2.0]);
    }

    #[test]
    fn gather_and_concat_round_trip() {
        let mut t = tape();
        let a = t.leaf(&[3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], true);
        let g_rows = t.gather_rows(a, &[2, 0]).unwrap();
        assert_eq!(t.value(g_rows), &[5.0, 6.0, 1.0, 2.0]);
        let left = t.slice_cols(a, 0, 1).unwrap();
        let right = t.slice_cols(a, 1, 1).unwrap();
        let back = t.concat_cols(&[left, right]).unwrap();
        assert_eq!(t.value(back), t.value(a));
        let l = t.sum(back);
        t.backward(l).unwrap();
        assert_eq!(t.grad(a).unwrap(), &[1.0; 6]);
    }

    #[test]
    fn kernels_agree_with_naive_transpose_forms() {
        let a = vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]; // [2,3]
        let b = vec![7.0f64, 8.0, 9.0, 10.0, 11.0, 12.0]; // [2,3] or [3,2]
        let c1 = mm_a_bt(&a, &b, 2, 3, 2); // A[2,3]·B[2,3]ᵀ
        // reference: transpose b then mm
        let bt = vec![7.0, 10.0, 8.0, 11.0, 9.0, 12.0]; // [3,2]
        let c1_ref = mm(&a, &bt, 2, 3, 2);
        assert_eq!(c1, c1_ref);
        let c2 = mm_at_b(&a, &b, 2, 3, 3); // A[2,3]ᵀ·B[2,3]
        let at = vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]; // [3,2]
        let c2_ref = mm(&at, &b, 3, 2, 3);
        assert_eq!(c2, c2_ref);
    }
}
