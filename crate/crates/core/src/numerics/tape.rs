//! Reverse-mode automatic differentiation over whole-tensor operations.
//!
//! A `Tape` records every primitive applied during a forward pass as a node
//! holding its output value. Nodes can only reference earlier nodes, so the
//! recording order is a topological order and the backward pass is a single
//! reverse sweep. Gradient accumulators start at zero on every backward call.
//!
//! Every forward operation checks its output for NaN/Inf and fails rather
//! than propagate a poisoned value into an optimizer step.

use crate::error::{Error, Result};
use crate::numerics::ops;
use crate::numerics::tensor::Tensor;

/// Handle to a value recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValueId(usize);

/// One batch of sparse rows: `(column index, weight)` pairs per row, feeding
/// a dense [dim, out] matrix. Rows are an input, never a parameter.
#[derive(Debug, Clone)]
pub struct SparseBatch {
    pub dim: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

#[derive(Debug)]
enum Op {
    Leaf,
    /// [m,k] x [k,n] -> [m,n]
    Matmul { a: ValueId, b: ValueId },
    /// sparse [m,dim] x dense [dim,n] -> [m,n]
    SparseMatmul { input: SparseBatch, weight: ValueId },
    /// [m,n] + [n] broadcast over rows
    AddBias { a: ValueId, bias: ValueId },
    Add { a: ValueId, b: ValueId },
    Sub { a: ValueId, b: ValueId },
    MulElem { a: ValueId, b: ValueId },
    Scale { a: ValueId, c: f64 },
    Relu { a: ValueId },
    /// per-row zero-mean unit-popvar normalization
    RowWhiten { a: ValueId, eps: f64 },
    /// mu + exp(logvar/2) * noise, noise held as a constant
    Reparameterize { mu: ValueId, logvar: ValueId, noise: Tensor },
    /// mean squared error over all elements -> scalar
    MseMean { a: ValueId, b: ValueId },
    /// mean over rows of KL(N(mu, diag e^logvar) || N(0, I)) -> scalar
    KlMean { mu: ValueId, logvar: ValueId },
    /// mean smooth-L1 over all elements -> scalar
    SmoothL1Mean { a: ValueId, b: ValueId, beta: f64 },
    /// mean cross-entropy of row softmax vs labels -> scalar
    SoftmaxCeMean { logits: ValueId, labels: Vec<usize> },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients from one backward pass, indexed by the ids of the tape that
/// produced them.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: ValueId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    pub fn take(&mut self, id: ValueId) -> Option<Tensor> {
        self.grads[id.0].take()
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: ValueId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Record an input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> ValueId {
        self.push(value, Op::Leaf, false)
    }

    /// Record a trainable parameter.
    pub fn param(&mut self, value: Tensor) -> ValueId {
        self.push(value, Op::Leaf, true)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> ValueId {
        let id = ValueId(self.nodes.len());
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        id
    }

    fn push_checked(&mut self, name: &'static str, value: Tensor, op: Op, requires_grad: bool) -> Result<ValueId> {
        if !value.all_finite() {
            return Err(Error::NonFinite {
                op: name,
                context: None,
            });
        }
        Ok(self.push(value, op, requires_grad))
    }

    fn needs_grad(&self, ids: &[ValueId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    fn check_rank2(&self, name: &'static str, id: ValueId) -> Result<(usize, usize)> {
        let s = self.value(id).shape();
        if s.len() != 2 {
            return Err(Error::Dimension {
                op: name,
                detail: format!("expected rank-2 tensor, got shape {s:?}"),
            });
        }
        Ok((s[0], s[1]))
    }

    fn check_same_shape(&self, name: &'static str, a: ValueId, b: ValueId) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::Dimension {
                op: name,
                detail: format!(
                    "shapes {:?} vs {:?}",
                    self.value(a).shape(),
                    self.value(b).shape()
                ),
            });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (m, k) = self.check_rank2("matmul", a)?;
        let (k2, n) = self.check_rank2("matmul", b)?;
        if k != k2 {
            return Err(Error::Dimension {
                op: "matmul",
                detail: format!("inner dims {k} vs {k2}"),
            });
        }
        let mut out = vec![0.0; m * n];
        matmul_into(self.value(a).data(), self.value(b).data(), m, k, n, &mut out);
        let rg = self.needs_grad(&[a, b]);
        self.push_checked("matmul", Tensor::new(vec![m, n], out)?, Op::Matmul { a, b }, rg)
    }

    pub fn sparse_matmul(&mut self, input: SparseBatch, weight: ValueId) -> Result<ValueId> {
        let (dim, n) = self.check_rank2("sparse_matmul", weight)?;
        if input.dim != dim {
            return Err(Error::Dimension {
                op: "sparse_matmul",
                detail: format!("input dim {} vs weight rows {}", input.dim, dim),
            });
        }
        let m = input.rows.len();
        let w = self.value(weight).data();
        let mut out = vec![0.0; m * n];
        for (i, row) in input.rows.iter().enumerate() {
            let dst = &mut out[i * n..(i + 1) * n];
            for &(idx, c) in row {
                debug_assert!(idx < dim);
                let src = &w[idx * n..(idx + 1) * n];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += c * s;
                }
            }
        }
        let rg = self.needs_grad(&[weight]);
        self.push_checked(
            "sparse_matmul",
            Tensor::new(vec![m, n], out)?,
            Op::SparseMatmul { input, weight },
            rg,
        )
    }

    pub fn add_bias(&mut self, a: ValueId, bias: ValueId) -> Result<ValueId> {
        let (m, n) = self.check_rank2("add_bias", a)?;
        let bshape = self.value(bias).shape();
        if bshape != [n] {
            return Err(Error::Dimension {
                op: "add_bias",
                detail: format!("bias shape {bshape:?} vs {n} columns"),
            });
        }
        let av = self.value(a).data();
        let bv = self.value(bias).data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] = av[i * n + j] + bv[j];
            }
        }
        let rg = self.needs_grad(&[a, bias]);
        self.push_checked("add_bias", Tensor::new(vec![m, n], out)?, Op::AddBias { a, bias }, rg)
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.check_same_shape("add", a, b)?;
        let out: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        let rg = self.needs_grad(&[a, b]);
        self.push_checked("add", Tensor::new(shape, out)?, Op::Add { a, b }, rg)
    }

    pub fn sub(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.check_same_shape("sub", a, b)?;
        let out: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x - y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        let rg = self.needs_grad(&[a, b]);
        self.push_checked("sub", Tensor::new(shape, out)?, Op::Sub { a, b }, rg)
    }

    pub fn mul_elem(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.check_same_shape("mul_elem", a, b)?;
        let out: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        let rg = self.needs_grad(&[a, b]);
        self.push_checked("mul_elem", Tensor::new(shape, out)?, Op::MulElem { a, b }, rg)
    }

    pub fn scale(&mut self, a: ValueId, c: f64) -> Result<ValueId> {
        let out: Vec<f64> = self.value(a).data().iter().map(|x| x * c).collect();
        let shape = self.value(a).shape().to_vec();
        let rg = self.needs_grad(&[a]);
        self.push_checked("scale", Tensor::new(shape, out)?, Op::Scale { a, c }, rg)
    }

    pub fn relu(&mut self, a: ValueId) -> Result<ValueId> {
        let out: Vec<f64> = self.value(a).data().iter().map(|x| x.max(0.0)).collect();
        let shape = self.value(a).shape().to_vec();
        let rg = self.needs_grad(&[a]);
        self.push_checked("relu", Tensor::new(shape, out)?, Op::Relu { a }, rg)
    }

    /// Whiten each row to zero mean and unit population variance.
    pub fn row_whiten(&mut self, a: ValueId, eps: f64) -> Result<ValueId> {
        let (m, n) = self.check_rank2("row_whiten", a)?;
        if n < 2 {
            return Err(Error::Dimension {
                op: "row_whiten",
                detail: format!("need at least 2 columns, got {n}"),
            });
        }
        let av = self.value(a).data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &av[i * n..(i + 1) * n];
            let w = ops::whiten(row, eps)?;
            out[i * n..(i + 1) * n].copy_from_slice(&w);
        }
        let rg = self.needs_grad(&[a]);
        self.push_checked("row_whiten", Tensor::new(vec![m, n], out)?, Op::RowWhiten { a, eps }, rg)
    }

    /// z = mu + exp(logvar/2) * noise. The noise is a constant: gradient
    /// flows to mu and logvar only.
    pub fn reparameterize(&mut self, mu: ValueId, logvar: ValueId, noise: Tensor) -> Result<ValueId> {
        self.check_same_shape("reparameterize", mu, logvar)?;
        if noise.shape() != self.value(mu).shape() {
            return Err(Error::Dimension {
                op: "reparameterize",
                detail: format!(
                    "noise shape {:?} vs mu shape {:?}",
                    noise.shape(),
                    self.value(mu).shape()
                ),
            });
        }
        let out: Vec<f64> = self
            .value(mu)
            .data()
            .iter()
            .zip(self.value(logvar).data())
            .zip(noise.data())
            .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
            .collect();
        let shape = self.value(mu).shape().to_vec();
        let rg = self.needs_grad(&[mu, logvar]);
        self.push_checked(
            "reparameterize",
            Tensor::new(shape, out)?,
            Op::Reparameterize { mu, logvar, noise },
            rg,
        )
    }

    pub fn mse_mean(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.check_same_shape("mse_mean", a, b)?;
        let n = self.value(a).numel() as f64;
        let total: f64 = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        let rg = self.needs_grad(&[a, b]);
        self.push_checked("mse_mean", Tensor::scalar(total / n), Op::MseMean { a, b }, rg)
    }

    /// Mean over rows of the per-row KL to the standard normal.
    pub fn kl_mean(&mut self, mu: ValueId, logvar: ValueId) -> Result<ValueId> {
        self.check_same_shape("kl_mean", mu, logvar)?;
        let (m, _) = self.check_rank2("kl_mean", mu)?;
        let total: f64 = self
            .value(mu)
            .data()
            .iter()
            .zip(self.value(logvar).data())
            .map(|(mx, lv)| 0.5 * (lv.exp() + mx * mx - 1.0 - lv))
            .sum();
        let rg = self.needs_grad(&[mu, logvar]);
        self.push_checked(
            "kl_mean",
            Tensor::scalar(total / m as f64),
            Op::KlMean { mu, logvar },
            rg,
        )
    }

    pub fn smooth_l1_mean(&mut self, a: ValueId, b: ValueId, beta: f64) -> Result<ValueId> {
        self.check_same_shape("smooth_l1_mean", a, b)?;
        if beta <= 0.0 {
            return Err(Error::Config(format!("smooth_l1 beta must be positive, got {beta}")));
        }
        let n = self.value(a).numel() as f64;
        let total: f64 = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| ops::smooth_l1_elem(x - y, beta))
            .sum();
        let rg = self.needs_grad(&[a, b]);
        self.push_checked(
            "smooth_l1_mean",
            Tensor::scalar(total / n),
            Op::SmoothL1Mean { a, b, beta },
            rg,
        )
    }

    /// Mean cross-entropy between row softmaxes and integer labels.
    pub fn softmax_ce_mean(&mut self, logits: ValueId, labels: Vec<usize>) -> Result<ValueId> {
        let (m, c) = self.check_rank2("softmax_ce_mean", logits)?;
        if labels.len() != m {
            return Err(Error::Dimension {
                op: "softmax_ce_mean",
                detail: format!("{} labels for {} rows", labels.len(), m),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::Index {
                op: "softmax_ce_mean",
                detail: format!("label {bad} out of range for {c} classes"),
            });
        }
        let lv = self.value(logits).data();
        let mut total = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let row = &lv[i * c..(i + 1) * c];
            total += ops::log_sum_exp(row) - row[y];
        }
        let rg = self.needs_grad(&[logits]);
        self.push_checked(
            "softmax_ce_mean",
            Tensor::scalar(total / m as f64),
            Op::SoftmaxCeMean { logits, labels },
            rg,
        )
    }

    /// Reverse sweep from a scalar loss. Accumulators are freshly zeroed,
    /// nodes are visited in exact reverse recording order (a reverse
    /// topological order by construction), and only paths that require
    /// gradients are walked.
    pub fn backward(&self, loss: ValueId) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Dimension {
                op: "backward",
                detail: format!("loss must be scalar, got shape {:?}", self.value(loss).shape()),
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let seed_shape = self.value(loss).shape().to_vec();
        grads[loss.0] = Some(Tensor::new(seed_shape, vec![1.0]).expect("scalar seed"));

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                grads[idx] = None;
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.apply_backward(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn apply_backward(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::Matmul { a, b } => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let (m, k) = (av.rows(), av.cols());
                let n = bv.cols();
                if self.wants(*a) {
                    let da = self.buf(grads, *a);
                    // dA = dOut * B^T
                    for i in 0..m {
                        for kk in 0..k {
                            let mut acc = 0.0;
                            let grow = &g.data()[i * n..(i + 1) * n];
                            let brow = &bv.data()[kk * n..(kk + 1) * n];
                            for j in 0..n {
                                acc += grow[j] * brow[j];
                            }
                            da.data_mut()[i * k + kk] += acc;
                        }
                    }
                }
                if self.wants(*b) {
                    let db = self.buf(grads, *b);
                    // dB = A^T * dOut
                    for i in 0..m {
                        for kk in 0..k {
                            let aik = av.data()[i * k + kk];
                            if aik == 0.0 {
                                continue;
                            }
                            let grow = &g.data()[i * n..(i + 1) * n];
                            let drow = &mut db.data_mut()[kk * n..(kk + 1) * n];
                            for j in 0..n {
                                drow[j] += aik * grow[j];
                            }
                        }
                    }
                }
            }
            Op::SparseMatmul { input, weight } => {
                if self.wants(*weight) {
                    let n = self.value(*weight).cols();
                    let dw = self.buf(grads, *weight);
                    for (i, row) in input.rows.iter().enumerate() {
                        let grow = &g.data()[i * n..(i + 1) * n];
                        for &(col, c) in row {
                            let drow = &mut dw.data_mut()[col * n..(col + 1) * n];
                            for j in 0..n {
                                drow[j] += c * grow[j];
                            }
                        }
                    }
                }
            }
            Op::AddBias { a, bias } => {
                if self.wants(*a) {
                    self.accumulate(grads, *a, g.data());
                }
                if self.wants(*bias) {
                    let (m, n) = (self.value(*a).rows(), self.value(*a).cols());
                    let db = self.buf(grads, *bias);
                    for i in 0..m {
                        for j in 0..n {
                            db.data_mut()[j] += g.data()[i * n + j];
                        }
                    }
                }
            }
            Op::Add { a, b } => {
                if self.wants(*a) {
                    self.accumulate(grads, *a, g.data());
                }
                if self.wants(*b) {
                    self.accumulate(grads, *b, g.data());
                }
            }
            Op::Sub { a, b } => {
                if self.wants(*a) {
                    self.accumulate(grads, *a, g.data());
                }
                if self.wants(*b) {
                    let neg: Vec<f64> = g.data().iter().map(|x| -x).collect();
                    self.accumulate(grads, *b, &neg);
                }
            }
            Op::MulElem { a, b } => {
                if self.wants(*a) {
                    let contrib: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(self.value(*b).data())
                        .map(|(gx, bx)| gx * bx)
                        .collect();
                    self.accumulate(grads, *a, &contrib);
                }
                if self.wants(*b) {
                    let contrib: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(self.value(*a).data())
                        .map(|(gx, ax)| gx * ax)
                        .collect();
                    self.accumulate(grads, *b, &contrib);
                }
            }
            Op::Scale { a, c } => {
                if self.wants(*a) {
                    let contrib: Vec<f64> = g.data().iter().map(|x| x * c).collect();
                    self.accumulate(grads, *a, &contrib);
                }
            }
            Op::Relu { a } => {
                if self.wants(*a) {
                    let contrib: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(self.value(*a).data())
                        .map(|(gx, ax)| if *ax > 0.0 { *gx } else { 0.0 })
                        .collect();
                    self.accumulate(grads, *a, &contrib);
                }
            }
            Op::RowWhiten { a, eps } => {
                if self.wants(*a) {
                    let av = self.value(*a);
                    let y = &node.value;
                    let (m, n) = (av.rows(), av.cols());
                    let nf = n as f64;
                    let da = self.buf(grads, *a);
                    for i in 0..m {
                        let xrow = &av.data()[i * n..(i + 1) * n];
                        let yrow = &y.data()[i * n..(i + 1) * n];
                        let grow = &g.data()[i * n..(i + 1) * n];
                        let (_, var) = ops::mean_popvar(xrow);
                        let s = (var + eps).sqrt();
                        let gmean = grow.iter().sum::<f64>() / nf;
                        let gy = grow.iter().zip(yrow).map(|(gx, yx)| gx * yx).sum::<f64>() / nf;
                        let drow = &mut da.data_mut()[i * n..(i + 1) * n];
                        for j in 0..n {
                            drow[j] += (grow[j] - gmean - yrow[j] * gy) / s;
                        }
                    }
                }
            }
            Op::Reparameterize { mu, logvar, noise } => {
                if self.wants(*mu) {
                    self.accumulate(grads, *mu, g.data());
                }
                if self.wants(*logvar) {
                    let contrib: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(self.value(*logvar).data())
                        .zip(noise.data())
                        .map(|((gx, lv), e)| gx * 0.5 * (0.5 * lv).exp() * e)
                        .collect();
                    self.accumulate(grads, *logvar, &contrib);
                }
            }
            Op::MseMean { a, b } => {
                let gs = g.item();
                let n = self.value(*a).numel() as f64;
                let scale = gs * 2.0 / n;
                if self.wants(*a) {
                    let contrib: Vec<f64> = self
                        .value(*a)
                        .data()
                        .iter()
                        .zip(self.value(*b).data())
                        .map(|(x, y)| scale * (x - y))
                        .collect();
                    self.accumulate(grads, *a, &contrib);
                }
                if self.wants(*b) {
                    let contrib: Vec<f64> = self
                        .value(*a)
                        .data()
                        .iter()
                        .zip(self.value(*b).data())
                        .map(|(x, y)| -scale * (x - y))
                        .collect();
                    self.accumulate(grads, *b, &contrib);
                }
            }
            Op::KlMean { mu, logvar } => {
                let gs = g.item();
                let m = self.value(*mu).rows() as f64;
                if self.wants(*mu) {
                    let contrib: Vec<f64> =
                        self.value(*mu).data().iter().map(|x| gs * x / m).collect();
                    self.accumulate(grads, *mu, &contrib);
                }
                if self.wants(*logvar) {
                    let contrib: Vec<f64> = self
                        .value(*logvar)
                        .data()
                        .iter()
                        .map(|lv| gs * 0.5 * (lv.exp() - 1.0) / m)
                        .collect();
                    self.accumulate(grads, *logvar, &contrib);
                }
            }
            Op::SmoothL1Mean { a, b, beta } => {
                let gs = g.item();
                let n = self.value(*a).numel() as f64;
                let diffs: Vec<f64> = self
                    .value(*a)
                    .data()
                    .iter()
                    .zip(self.value(*b).data())
                    .map(|(x, y)| gs * ops::smooth_l1_deriv(x - y, *beta) / n)
                    .collect();
                if self.wants(*a) {
                    self.accumulate(grads, *a, &diffs);
                }
                if self.wants(*b) {
                    let neg: Vec<f64> = diffs.iter().map(|x| -x).collect();
                    self.accumulate(grads, *b, &neg);
                }
            }
            Op::SoftmaxCeMean { logits, labels } => {
                if self.wants(*logits) {
                    let gs = g.item();
                    let lv = self.value(*logits);
                    let (m, c) = (lv.rows(), lv.cols());
                    let dl = self.buf(grads, *logits);
                    for (i, &y) in labels.iter().enumerate() {
                        let row = &lv.data()[i * c..(i + 1) * c];
                        let p = ops::softmax(row);
                        let drow = &mut dl.data_mut()[i * c..(i + 1) * c];
                        for j in 0..c {
                            let ind = if j == y { 1.0 } else { 0.0 };
                            drow[j] += gs * (p[j] - ind) / m as f64;
                        }
                    }
                }
            }
        }
    }

    fn wants(&self, id: ValueId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Gradient buffer for a node, created zeroed on first touch.
    #[allow(clippy::mut_from_ref)]
    fn buf<'g>(&self, grads: &'g mut [Option<Tensor>], id: ValueId) -> &'g mut Tensor {
        let shape = self.value(id).shape().to_vec();
        grads[id.0].get_or_insert_with(|| Tensor::zeros(shape))
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], id: ValueId, contrib: &[f64]) {
        let t = self.buf(grads, id);
        for (d, c) in t.data_mut().iter_mut().zip(contrib) {
            *d += c;
        }
    }
}

fn matmul_into(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (kk, &aik) in arow.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let brow = &b[kk * n..(kk + 1) * n];
            for j in 0..n {
                orow[j] += aik * brow[j];
            }
        }
    }
}
