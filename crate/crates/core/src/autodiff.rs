//! Reverse-mode differentiation over matrix-valued nodes.
//!
//! A [`ValueGraph`] records each operation as it is evaluated. Nodes are
//! appended in evaluation order, so every input precedes its consumers and
//! the reverse pass is a single walk from the loss node down to index 0.
//!
//! ```
//! use tsgraph::autodiff::ValueGraph;
//! use tsgraph::tensor::DenseMatrix;
//!
//! let mut g = ValueGraph::new();
//! let x = g.param(DenseMatrix::scalar(3.0));
//! let sq = g.mul(x, x).unwrap();
//! let grads = g.backward(sq).unwrap();
//! assert_eq!(grads.get(x).unwrap().item(), Some(6.0));
//! ```

use std::sync::Arc;

use crate::error::TensorError;
use crate::nn::{self, NormAxis, NormStats};
use crate::tensor::{self, DenseMatrix, SparseCSR};

/// Probability floor inside logarithms.
pub const LOG_CLAMP: f64 = 1e-12;

/// Handle to a node of a [`ValueGraph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A sparse operator together with its transpose, which the reverse pass of
/// `spmm` needs.
#[derive(Debug)]
pub struct SparseOperator {
    forward: SparseCSR,
    transpose: SparseCSR,
}

impl SparseOperator {
    pub fn new(forward: SparseCSR) -> Arc<Self> {
        let transpose = forward.transpose();
        Arc::new(Self { forward, transpose })
    }

    pub fn matrix(&self) -> &SparseCSR {
        &self.forward
    }
}

/// Entropy family used by [`ValueGraph::mean_entropy`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntropyKind {
    /// `-Σ p log p`, logs clamped at [`LOG_CLAMP`].
    Shannon,
    /// Tsallis order 2: `1 - Σ p²`.
    Tsallis2,
}

/// Shannon entropy of one row with the same clamp the graph uses.
pub fn shannon(row: &[f64]) -> f64 {
    -row.iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.max(LOG_CLAMP).ln())
        .sum::<f64>()
}

pub fn tsallis2(row: &[f64]) -> f64 {
    1.0 - row.iter().map(|p| p * p).sum::<f64>()
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    SpMM(Arc<SparseOperator>, NodeId),
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Relu(NodeId),
    Dropout(NodeId, DenseMatrix),
    Norm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        axis: NormAxis,
        xhat: DenseMatrix,
        inv_std: Vec<f64>,
        /// Statistics depend on `x` (false when frozen stats were supplied).
        batch_dependent: bool,
    },
    Softmax(NodeId),
    CrossEntropy {
        probs: NodeId,
        rows: Vec<usize>,
        labels: Vec<usize>,
    },
    MeanEntropy {
        probs: NodeId,
        rows: Vec<usize>,
        kind: EntropyKind,
    },
    Sum(NodeId),
    Combine(Vec<(NodeId, f64)>),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: DenseMatrix,
    requires_grad: bool,
}

/// Recorded computation: values, operation kinds and their inputs.
#[derive(Debug, Default)]
pub struct ValueGraph {
    nodes: Vec<Node>,
}

/// Gradient of a scalar loss with respect to every node that needs one.
#[derive(Debug)]
pub struct Gradients {
    slots: Vec<Option<DenseMatrix>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&DenseMatrix> {
        self.slots.get(id.0).and_then(Option::as_ref)
    }

    /// Gradient slot, or zeros shaped like the node when nothing reached it.
    pub fn get_or_zeros(&self, id: NodeId, graph: &ValueGraph) -> DenseMatrix {
        self.get(id).cloned().unwrap_or_else(|| {
            let (r, c) = graph.value(id).shape();
            DenseMatrix::zeros(r, c)
        })
    }

    pub fn take(&mut self, id: NodeId) -> Option<DenseMatrix> {
        self.slots.get_mut(id.0).and_then(Option::take)
    }
}

fn shape_err(what: &str, a: (usize, usize), b: (usize, usize)) -> TensorError {
    TensorError::Shape(format!("{what}: {}x{} vs {}x{}", a.0, a.1, b.0, b.1))
}

impl ValueGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &DenseMatrix {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: DenseMatrix, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: DenseMatrix) -> NodeId {
        self.push(Op::Leaf, value, true)
    }

    /// Leaf that receives no gradient.
    pub fn constant(&mut self, value: DenseMatrix) -> NodeId {
        self.push(Op::Leaf, value, false)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(Op::MatMul(a, b), value, rg))
    }

    pub fn spmm(&mut self, op: &Arc<SparseOperator>, b: NodeId) -> Result<NodeId, TensorError> {
        let value = tensor::spmm(&op.forward, self.value(b))?;
        let rg = self.rg(&[b]);
        Ok(self.push(Op::SpMM(Arc::clone(op), b), value, rg))
    }

    /// `x + 1·bᵀ` where `b` is a 1×cols row.
    pub fn add_bias(&mut self, x: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (xv, bv) = (self.value(x), self.value(b));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(shape_err("add_bias", xv.shape(), bv.shape()));
        }
        let mut value = xv.clone();
        for r in 0..value.rows() {
            for (v, bb) in value.row_mut(r).iter_mut().zip(bv.data()) {
                *v += bb;
            }
        }
        let rg = self.rg(&[x, b]);
        Ok(self.push(Op::AddBias(x, b), value, rg))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(Op::Add(a, b), value, rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err("mul", av.shape(), bv.shape()));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let value = DenseMatrix::from_vec(av.rows(), av.cols(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(Op::Mul(a, b), value, rg))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = nn::relu(self.value(x));
        let rg = self.rg(&[x]);
        self.push(Op::Relu(x), value, rg)
    }

    /// Multiplies by a precomputed inverted-dropout mask.
    pub fn dropout(&mut self, x: NodeId, mask: DenseMatrix) -> Result<NodeId, TensorError> {
        let xv = self.value(x);
        if xv.shape() != mask.shape() {
            return Err(shape_err("dropout", xv.shape(), mask.shape()));
        }
        let data = xv.data().iter().zip(mask.data()).map(|(a, m)| a * m).collect();
        let value = DenseMatrix::from_vec(xv.rows(), xv.cols(), data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(Op::Dropout(x, mask), value, rg))
    }

    /// Affine normalization. With `frozen = None` the statistics are computed
    /// from `x` along `axis` and differentiated through; otherwise the given
    /// statistics are treated as constants. Returns the statistics used.
    pub fn norm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        axis: NormAxis,
        frozen: Option<&NormStats>,
    ) -> Result<(NodeId, NormStats), TensorError> {
        let xv = self.value(x);
        let width = xv.cols();
        for p in [gamma, beta] {
            let s = self.value(p).shape();
            if s != (1, width) {
                return Err(shape_err("norm affine", (1, width), s));
            }
        }
        let stats = match frozen {
            Some(s) => s.clone(),
            None => match axis {
                NormAxis::Row => nn::row_stats(xv),
                NormAxis::Col => nn::col_stats(xv),
            },
        };
        let expect = match axis {
            NormAxis::Row => xv.rows(),
            NormAxis::Col => xv.cols(),
        };
        if stats.mean.len() != expect {
            return Err(TensorError::Shape(format!(
                "normalization statistics of length {} for {expect} slices",
                stats.mean.len()
            )));
        }
        let xhat = nn::standardize(xv, &stats, axis);
        let value = nn::affine(&xhat, self.value(gamma).data(), self.value(beta).data());
        let rg = self.rg(&[x, gamma, beta]);
        let id = self.push(
            Op::Norm {
                x,
                gamma,
                beta,
                axis,
                xhat,
                inv_std: stats.inv_std.clone(),
                batch_dependent: frozen.is_none(),
            },
            value,
            rg,
        );
        Ok((id, stats))
    }

    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        let value = tensor::row_softmax(self.value(x))?;
        let rg = self.rg(&[x]);
        Ok(self.push(Op::Softmax(x), value, rg))
    }

    /// Mean over `rows` of `-log max(p[r, label], LOG_CLAMP)`. Scalar.
    pub fn cross_entropy(
        &mut self,
        probs: NodeId,
        rows: &[usize],
        labels: &[usize],
    ) -> Result<NodeId, TensorError> {
        let pv = self.value(probs);
        if rows.len() != labels.len() || rows.is_empty() {
            return Err(TensorError::InvalidArgument(
                "cross_entropy needs one label per row and at least one row".into(),
            ));
        }
        let mut total = 0.0;
        for (&r, &y) in rows.iter().zip(labels) {
            if r >= pv.rows() || y >= pv.cols() {
                return Err(TensorError::InvalidArgument(format!(
                    "row {r} / label {y} out of range"
                )));
            }
            total -= pv.get(r, y).max(LOG_CLAMP).ln();
        }
        let value = DenseMatrix::scalar(total / rows.len() as f64);
        let rg = self.rg(&[probs]);
        Ok(self.push(
            Op::CrossEntropy {
                probs,
                rows: rows.to_vec(),
                labels: labels.to_vec(),
            },
            value,
            rg,
        ))
    }

    /// Mean entropy of the selected rows. Scalar.
    pub fn mean_entropy(
        &mut self,
        probs: NodeId,
        rows: &[usize],
        kind: EntropyKind,
    ) -> Result<NodeId, TensorError> {
        let pv = self.value(probs);
        if rows.is_empty() {
            return Err(TensorError::InvalidArgument(
                "mean_entropy over an empty row set".into(),
            ));
        }
        let mut total = 0.0;
        for &r in rows {
            if r >= pv.rows() {
                return Err(TensorError::InvalidArgument(format!("row {r} out of range")));
            }
            total += match kind {
                EntropyKind::Shannon => shannon(pv.row(r)),
                EntropyKind::Tsallis2 => tsallis2(pv.row(r)),
            };
        }
        let value = DenseMatrix::scalar(total / rows.len() as f64);
        let rg = self.rg(&[probs]);
        Ok(self.push(
            Op::MeanEntropy {
                probs,
                rows: rows.to_vec(),
                kind,
            },
            value,
            rg,
        ))
    }

    /// Sum of all entries. Scalar.
    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let value = DenseMatrix::scalar(self.value(x).data().iter().sum());
        let rg = self.rg(&[x]);
        self.push(Op::Sum(x), value, rg)
    }

    /// Linear combination `Σ cᵢ·sᵢ` of scalar nodes, summed left to right.
    pub fn combine(&mut self, terms: &[(NodeId, f64)]) -> Result<NodeId, TensorError> {
        let mut total = 0.0;
        for &(id, c) in terms {
            let v = self.value(id).item().ok_or_else(|| {
                let (rows, cols) = self.value(id).shape();
                TensorError::NonScalarLoss { rows, cols }
            })?;
            total += c * v;
        }
        let ids: Vec<NodeId> = terms.iter().map(|t| t.0).collect();
        let rg = self.rg(&ids);
        Ok(self.push(Op::Combine(terms.to_vec()), DenseMatrix::scalar(total), rg))
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, TensorError> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(TensorError::NonScalarLoss {
                rows: lv.rows(),
                cols: lv.cols(),
            });
        }
        let mut slots: Vec<Option<DenseMatrix>> = (0..self.nodes.len()).map(|_| None).collect();
        slots[loss.0] = Some(DenseMatrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(upstream) = slots[idx].take() else {
                continue;
            };
            let contributions = self.local_grads(node, &upstream)?;
            for (target, grad) in contributions {
                if !self.nodes[target.0].requires_grad {
                    continue;
                }
                match &mut slots[target.0] {
                    Some(acc) => acc.add_assign(&grad)?,
                    slot @ None => *slot = Some(grad),
                }
            }
            // Leaves keep their gradient; intermediates are released.
            if matches!(node.op, Op::Leaf) {
                slots[idx] = Some(upstream);
            }
        }
        Ok(Gradients { slots })
    }

    fn local_grads(
        &self,
        node: &Node,
        up: &DenseMatrix,
    ) -> Result<Vec<(NodeId, DenseMatrix)>, TensorError> {
        let val = |id: NodeId| &self.nodes[id.0].value;
        let wants = |id: NodeId| self.nodes[id.0].requires_grad;
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if wants(*a) {
                    out.push((*a, up.matmul_t(val(*b))?));
                }
                if wants(*b) {
                    out.push((*b, val(*a).t_matmul(up)?));
                }
            }
            Op::SpMM(op, b) => {
                out.push((*b, tensor::spmm(&op.transpose, up)?));
            }
            Op::AddBias(x, b) => {
                if wants(*b) {
                    let mut db = DenseMatrix::zeros(1, up.cols());
                    for r in 0..up.rows() {
                        for (d, u) in db.data_mut().iter_mut().zip(up.row(r)) {
                            *d += u;
                        }
                    }
                    out.push((*b, db));
                }
                out.push((*x, up.clone()));
            }
            Op::Add(a, b) => {
                out.push((*a, up.clone()));
                out.push((*b, up.clone()));
            }
            Op::Mul(a, b) => {
                let prod = |other: &DenseMatrix| -> Result<DenseMatrix, TensorError> {
                    let data = up.data().iter().zip(other.data()).map(|(u, o)| u * o).collect();
                    DenseMatrix::from_vec(up.rows(), up.cols(), data)
                };
                if wants(*a) {
                    out.push((*a, prod(val(*b))?));
                }
                if wants(*b) {
                    out.push((*b, prod(val(*a))?));
                }
            }
            Op::Relu(x) => {
                let mut g = up.clone();
                for (gv, xv) in g.data_mut().iter_mut().zip(val(*x).data()) {
                    if *xv <= 0.0 {
                        *gv = 0.0;
                    }
                }
                out.push((*x, g));
            }
            Op::Dropout(x, mask) => {
                let mut g = up.clone();
                for (gv, m) in g.data_mut().iter_mut().zip(mask.data()) {
                    *gv *= m;
                }
                out.push((*x, g));
            }
            Op::Norm {
                x,
                gamma,
                beta,
                axis,
                xhat,
                inv_std,
                batch_dependent,
            } => {
                let gv = val(*gamma).data();
                if wants(*gamma) || wants(*beta) {
                    let mut dgamma = DenseMatrix::zeros(1, up.cols());
                    let mut dbeta = DenseMatrix::zeros(1, up.cols());
                    for r in 0..up.rows() {
                        for c in 0..up.cols() {
                            let u = up.get(r, c);
                            dgamma.data_mut()[c] += u * xhat.get(r, c);
                            dbeta.data_mut()[c] += u;
                        }
                    }
                    out.push((*gamma, dgamma));
                    out.push((*beta, dbeta));
                }
                if wants(*x) {
                    out.push((*x, norm_input_grad(up, gv, xhat, inv_std, *axis, *batch_dependent)));
                }
            }
            Op::Softmax(x) => {
                let p = &node.value;
                let mut g = DenseMatrix::zeros(p.rows(), p.cols());
                for r in 0..p.rows() {
                    let (pr, ur) = (p.row(r), up.row(r));
                    let dot: f64 = pr.iter().zip(ur).map(|(a, b)| a * b).sum();
                    for ((gv, pv), uv) in g.row_mut(r).iter_mut().zip(pr).zip(ur) {
                        *gv = pv * (uv - dot);
                    }
                }
                out.push((*x, g));
            }
            Op::CrossEntropy {
                probs,
                rows,
                labels,
            } => {
                let pv = val(*probs);
                let scale = up.data()[0] / rows.len() as f64;
                let mut g = DenseMatrix::zeros(pv.rows(), pv.cols());
                for (&r, &y) in rows.iter().zip(labels) {
                    let p = pv.get(r, y);
                    if p > LOG_CLAMP {
                        let cur = g.get(r, y);
                        g.set(r, y, cur - scale / p);
                    }
                }
                out.push((*probs, g));
            }
            Op::MeanEntropy { probs, rows, kind } => {
                let pv = val(*probs);
                let scale = up.data()[0] / rows.len() as f64;
                let mut g = DenseMatrix::zeros(pv.rows(), pv.cols());
                for &r in rows {
                    for (c, &p) in pv.row(r).iter().enumerate() {
                        let d = match kind {
                            EntropyKind::Tsallis2 => -2.0 * p,
                            EntropyKind::Shannon if p > LOG_CLAMP => -(p.ln() + 1.0),
                            EntropyKind::Shannon => -LOG_CLAMP.ln(),
                        };
                        let cur = g.get(r, c);
                        g.set(r, c, cur + scale * d);
                    }
                }
                out.push((*probs, g));
            }
            Op::Sum(x) => {
                let (r, c) = val(*x).shape();
                out.push((*x, DenseMatrix::filled(r, c, up.data()[0])));
            }
            Op::Combine(terms) => {
                for &(id, c) in terms {
                    out.push((id, DenseMatrix::scalar(c * up.data()[0])));
                }
            }
        }
        Ok(out)
    }
}

/// Input gradient of `y = γ ⊙ x̂ + β`.
fn norm_input_grad(
    up: &DenseMatrix,
    gamma: &[f64],
    xhat: &DenseMatrix,
    inv_std: &[f64],
    axis: NormAxis,
    batch_dependent: bool,
) -> DenseMatrix {
    let (rows, cols) = up.shape();
    let mut dxhat = up.clone();
    for r in 0..rows {
        for (v, g) in dxhat.row_mut(r).iter_mut().zip(gamma) {
            *v *= g;
        }
    }
    let mut dx = DenseMatrix::zeros(rows, cols);
    if !batch_dependent {
        for r in 0..rows {
            for c in 0..cols {
                let k = if axis == NormAxis::Row { r } else { c };
                dx.set(r, c, dxhat.get(r, c) * inv_std[k]);
            }
        }
        return dx;
    }
    match axis {
        NormAxis::Row => {
            let n = cols as f64;
            for r in 0..rows {
                let (d, xh) = (dxhat.row(r), xhat.row(r));
                let s1: f64 = d.iter().sum();
                let s2: f64 = d.iter().zip(xh).map(|(a, b)| a * b).sum();
                for c in 0..cols {
                    dx.set(r, c, inv_std[r] / n * (n * d[c] - s1 - xh[c] * s2));
                }
            }
        }
        NormAxis::Col => {
            let n = rows as f64;
            let mut s1 = vec![0.0; cols];
            let mut s2 = vec![0.0; cols];
            for r in 0..rows {
                for c in 0..cols {
                    s1[c] += dxhat.get(r, c);
                    s2[c] += dxhat.get(r, c) * xhat.get(r, c);
                }
            }
            for r in 0..rows {
                for c in 0..cols {
                    let v = inv_std[c] / n * (n * dxhat.get(r, c) - s1[c] - xhat.get(r, c) * s2[c]);
                    dx.set(r, c, v);
                }
            }
        }
    }
    dx
}
