//! Reverse-mode differentiation over dense matrix operations.
//!
//! A [`Tape`] records every operation in execution order, so node ids are
//! already topologically sorted. [`Tape::backward`] walks the tape once in
//! reverse and accumulates adjoints. Every adjoint is written out by hand;
//! the polynomial filter node runs its recurrence backwards instead of
//! unrolling into primitive products.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::linalg::{self, DenseMatrix};
use crate::math;
use crate::polyfilter::{self, BasisKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    MatMulTransB(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRowBroadcast(NodeId, NodeId),
    Scale(NodeId, f64),
    Sum(Vec<NodeId>),
    SoftmaxRows {
        x: NodeId,
        scale: f64,
    },
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        /// Normalised input `x̂`.
        xhat: DenseMatrix,
        /// `1 / sqrt(var + eps)` per row.
        inv_std: Vec<f64>,
    },
    Gelu(NodeId),
    PolyFilter {
        a: NodeId,
        v: NodeId,
        alpha: NodeId,
        basis: BasisKind,
        terms: Vec<DenseMatrix>,
    },
    SelectRow {
        table: NodeId,
        row: usize,
    },
    AffineScalar {
        weight: NodeId,
        bias: NodeId,
        value: f64,
    },
    StackRows(Vec<NodeId>),
    MeanRows(NodeId),
    SquaredNorm(NodeId),
    SumAll(NodeId),
    SoftmaxCrossEntropy {
        logits: NodeId,
        target: usize,
        probs: Vec<f64>,
    },
    SquaredError {
        pred: NodeId,
        target: f64,
    },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: DenseMatrix,
}

/// Append-only record of a forward computation.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node adjoints produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<DenseMatrix>>,
}

impl Gradients {
    /// `∂loss/∂node`, or `None` if the node does not influence the loss.
    pub fn get(&self, id: NodeId) -> Option<&DenseMatrix> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// As [`Gradients::get`] but with zeros for unreachable nodes.
    pub fn get_or_zeros(&self, id: NodeId, rows: usize, cols: usize) -> DenseMatrix {
        self.get(id)
            .cloned()
            .unwrap_or_else(|| DenseMatrix::zeros(rows, cols))
    }
}

fn gelu_cdf(x: f64) -> f64 {
    0.5 * (1.0 + math::erf(x * core::f64::consts::FRAC_1_SQRT_2))
}

/// Exact GELU `x Φ(x)`.
pub fn gelu(x: f64) -> f64 {
    x * gelu_cdf(x)
}

fn gelu_grad(x: f64) -> f64 {
    gelu_cdf(x) + x * math::FRAC_1_SQRT_2PI * math::exp(-0.5 * x * x)
}

/// Layer-normalisation epsilon.
pub const LAYER_NORM_EPS: f64 = 1e-5;

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

    pub fn value(&self, id: NodeId) -> &DenseMatrix {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: DenseMatrix) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    /// Input or parameter.
    pub fn leaf(&mut self, value: DenseMatrix) -> NodeId {
        self.push(Op::Leaf, value)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = linalg::matmul(self.value(a), self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), v))
    }

    /// `a · bᵀ`.
    pub fn matmul_transb(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = linalg::matmul_transb(self.value(a), self.value(b))?;
        Ok(self.push(Op::MatMulTransB(a, b), v))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(Op::Add(a, b), v))
    }

    /// Adds the `1 × d` row `bias` to every row of `x`.
    pub fn add_row(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(shape_err(
                "add_row",
                format!("bias {}x{} for {}x{}", bv.rows(), bv.cols(), xv.rows(), xv.cols()),
            ));
        }
        let mut out = xv.clone();
        for i in 0..out.rows() {
            for (o, b) in out.row_mut(i).iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        Ok(self.push(Op::AddRowBroadcast(x, bias), out))
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        let v = self.value(x).scale(factor);
        self.push(Op::Scale(x, factor), v)
    }

    /// Elementwise sum of equally shaped nodes.
    pub fn sum(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        let first = xs
            .first()
            .ok_or_else(|| Error::Contract("sum of zero nodes".into()))?;
        let mut acc = self.value(*first).clone();
        for &x in &xs[1..] {
            acc = acc.add(self.value(x))?;
        }
        Ok(self.push(Op::Sum(xs.to_vec()), acc))
    }

    /// Row softmax of `x / scale`.
    pub fn softmax_rows(&mut self, x: NodeId, scale: f64) -> NodeId {
        let v = linalg::softmax_rows(self.value(x), scale);
        self.push(Op::SoftmaxRows { x, scale }, v)
    }

    /// Row-wise layer normalisation with affine `gamma`, `beta` (`1 × d`).
    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> Result<NodeId> {
        let xv = self.value(x);
        let (n, d) = xv.shape();
        let (g, b) = (self.value(gamma), self.value(beta));
        if g.shape() != (1, d) || b.shape() != (1, d) {
            return Err(shape_err("layer_norm", format!("affine params for width {d}")));
        }
        let mut xhat = DenseMatrix::zeros(n, d);
        let mut inv_std = Vec::with_capacity(n);
        for i in 0..n {
            let row = xv.row(i);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / math::sqrt(var + LAYER_NORM_EPS);
            for (h, &x) in xhat.row_mut(i).iter_mut().zip(row) {
                *h = (x - mean) * inv;
            }
            inv_std.push(inv);
        }
        let out = DenseMatrix::from_fn(n, d, |i, j| xhat[(i, j)] * g[(0, j)] + b[(0, j)]);
        Ok(self.push(
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            out,
        ))
    }

    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(gelu);
        self.push(Op::Gelu(x), v)
    }

    /// `Σ_k α_k P_k(A) V` with `alpha` a `1 × (order + 1)` node.
    pub fn poly_filter(
        &mut self,
        a: NodeId,
        v: NodeId,
        alpha: NodeId,
        basis: BasisKind,
    ) -> Result<NodeId> {
        let coeffs = self.value(alpha);
        if coeffs.rows() != 1 || coeffs.cols() == 0 {
            return Err(shape_err("poly_filter", format!("alpha is {:?}", coeffs.shape())));
        }
        let order = coeffs.cols() - 1;
        let terms = polyfilter::basis_terms(self.value(a), self.value(v), basis, order)?;
        let out = polyfilter::combine_terms(&terms, self.value(alpha).data());
        Ok(self.push(
            Op::PolyFilter {
                a,
                v,
                alpha,
                basis,
                terms,
            },
            out,
        ))
    }

    /// Row `row` of `table` as a `1 × d` node.
    pub fn select_row(&mut self, table: NodeId, row: usize) -> Result<NodeId> {
        let t = self.value(table);
        if row >= t.rows() {
            return Err(shape_err(
                "select_row",
                format!("row {row} of a {}-row table", t.rows()),
            ));
        }
        let v = DenseMatrix::from_vec(1, t.cols(), t.row(row).to_vec())?;
        Ok(self.push(Op::SelectRow { table, row }, v))
    }

    /// `value · weight + bias` for `1 × d` weight and bias.
    pub fn affine_scalar(&mut self, weight: NodeId, bias: NodeId, value: f64) -> Result<NodeId> {
        let mut out = self.value(weight).scale(value);
        out.axpy(1.0, self.value(bias))?;
        Ok(self.push(
            Op::AffineScalar {
                weight,
                bias,
                value,
            },
            out,
        ))
    }

    /// Stacks `1 × d` rows into an `n × d` matrix.
    pub fn stack_rows(&mut self, rows: &[NodeId]) -> Result<NodeId> {
        let d = rows.first().map_or(0, |&r| self.value(r).cols());
        let mut data = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            let v = self.value(r);
            if v.shape() != (1, d) {
                return Err(shape_err("stack_rows", format!("row node {:?}", v.shape())));
            }
            data.extend_from_slice(v.data());
        }
        let v = DenseMatrix::from_vec(rows.len(), d, data)?;
        Ok(self.push(Op::StackRows(rows.to_vec()), v))
    }

    /// Column means as a `1 × d` row.
    pub fn mean_rows(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let n = xv.rows() as f64;
        let v = DenseMatrix::from_fn(1, xv.cols(), |_, j| {
            (0..xv.rows()).map(|i| xv[(i, j)]).sum::<f64>() / n
        });
        self.push(Op::MeanRows(x), v)
    }

    /// `‖x‖²_F` as a `1 × 1` node.
    pub fn squared_norm(&mut self, x: NodeId) -> NodeId {
        let n = self.value(x).frobenius_norm();
        self.push(Op::SquaredNorm(x), DenseMatrix::filled(1, 1, n * n))
    }

    /// Sum of all entries as a `1 × 1` node.
    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let s = self.value(x).sum();
        self.push(Op::SumAll(x), DenseMatrix::filled(1, 1, s))
    }

    /// `−log softmax(logits)[target]` for a `1 × C` logit row.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, target: usize) -> Result<NodeId> {
        let l = self.value(logits);
        if l.rows() != 1 {
            return Err(shape_err("softmax_cross_entropy", format!("logits {:?}", l.shape())));
        }
        if target >= l.cols() {
            return Err(Error::Data(format!(
                "class {target} out of range for {} classes",
                l.cols()
            )));
        }
        let max = l.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + math::ln(l.data().iter().map(|&x| math::exp(x - max)).sum());
        let probs: Vec<f64> = l.data().iter().map(|&x| math::exp(x - log_z)).collect();
        let loss = log_z - l.data()[target];
        Ok(self.push(
            Op::SoftmaxCrossEntropy {
                logits,
                target,
                probs,
            },
            DenseMatrix::filled(1, 1, loss),
        ))
    }

    /// `(pred − target)²` for a `1 × 1` prediction.
    pub fn squared_error(&mut self, pred: NodeId, target: f64) -> Result<NodeId> {
        let p = self.value(pred);
        if p.shape() != (1, 1) {
            return Err(shape_err("squared_error", format!("prediction {:?}", p.shape())));
        }
        let diff = p[(0, 0)] - target;
        Ok(self.push(
            Op::SquaredError { pred, target },
            DenseMatrix::filled(1, 1, diff * diff),
        ))
    }

    /// Reverse accumulation from a scalar (`1 × 1`) node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<DenseMatrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(DenseMatrix::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, idx: usize, g: &DenseMatrix, grads: &mut [Option<DenseMatrix>]) -> Result<()> {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let da = linalg::matmul_transb(g, self.value(*b))?;
                let db = linalg::matmul_transa(self.value(*a), g)?;
                accumulate(grads, *a, da);
                accumulate(grads, *b, db);
            }
            Op::MatMulTransB(a, b) => {
                let da = linalg::matmul(g, self.value(*b))?;
                let db = linalg::matmul_transa(g, self.value(*a))?;
                accumulate(grads, *a, da);
                accumulate(grads, *b, db);
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::AddRowBroadcast(x, bias) => {
                accumulate(grads, *x, g.clone());
                let db = DenseMatrix::from_fn(1, g.cols(), |_, j| {
                    (0..g.rows()).map(|i| g[(i, j)]).sum()
                });
                accumulate(grads, *bias, db);
            }
            Op::Scale(x, factor) => accumulate(grads, *x, g.scale(*factor)),
            Op::Sum(xs) => {
                for &x in xs {
                    accumulate(grads, x, g.clone());
                }
            }
            Op::SoftmaxRows { x, scale } => {
                let y = &node.value;
                let mut dx = DenseMatrix::zeros(y.rows(), y.cols());
                for i in 0..y.rows() {
                    let dot: f64 = y.row(i).iter().zip(g.row(i)).map(|(a, b)| a * b).sum();
                    for j in 0..y.cols() {
                        dx[(i, j)] = y[(i, j)] * (g[(i, j)] - dot) / scale;
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let (n, d) = xhat.shape();
                let gam = self.value(*gamma);
                let mut dgamma = DenseMatrix::zeros(1, d);
                let mut dbeta = DenseMatrix::zeros(1, d);
                let mut dx = DenseMatrix::zeros(n, d);
                for i in 0..n {
                    let mut sum_dxhat = 0.0;
                    let mut sum_dxhat_xhat = 0.0;
                    for j in 0..d {
                        let gij = g[(i, j)];
                        dgamma[(0, j)] += gij * xhat[(i, j)];
                        dbeta[(0, j)] += gij;
                        let dxh = gij * gam[(0, j)];
                        sum_dxhat += dxh;
                        sum_dxhat_xhat += dxh * xhat[(i, j)];
                    }
                    let df = d as f64;
                    for j in 0..d {
                        let dxh = g[(i, j)] * gam[(0, j)];
                        dx[(i, j)] = inv_std[i] / df
                            * (df * dxh - sum_dxhat - xhat[(i, j)] * sum_dxhat_xhat);
                    }
                }
                accumulate(grads, *x, dx);
                accumulate(grads, *gamma, dgamma);
                accumulate(grads, *beta, dbeta);
            }
            Op::Gelu(x) => {
                let xv = self.value(*x);
                let mut dx = g.clone();
                for (d, &xi) in dx.data_mut().iter_mut().zip(xv.data()) {
                    *d *= gelu_grad(xi);
                }
                accumulate(grads, *x, dx);
            }
            Op::PolyFilter {
                a,
                v,
                alpha,
                basis,
                terms,
            } => {
                let (da, dv, dalpha) =
                    poly_filter_adjoint(self.value(*a), self.value(*alpha).data(), *basis, terms, g)?;
                accumulate(grads, *a, da);
                accumulate(grads, *v, dv);
                accumulate(grads, *alpha, dalpha);
            }
            Op::SelectRow { table, row } => {
                let t = self.value(*table);
                let mut dt = DenseMatrix::zeros(t.rows(), t.cols());
                dt.row_mut(*row).copy_from_slice(g.data());
                accumulate(grads, *table, dt);
            }
            Op::AffineScalar {
                weight,
                bias,
                value,
            } => {
                accumulate(grads, *weight, g.scale(*value));
                accumulate(grads, *bias, g.clone());
            }
            Op::StackRows(rows) => {
                for (i, &r) in rows.iter().enumerate() {
                    let dr = DenseMatrix::from_vec(1, g.cols(), g.row(i).to_vec())?;
                    accumulate(grads, r, dr);
                }
            }
            Op::MeanRows(x) => {
                let n = self.value(*x).rows();
                let dx = DenseMatrix::from_fn(n, g.cols(), |_, j| g[(0, j)] / n as f64);
                accumulate(grads, *x, dx);
            }
            Op::SquaredNorm(x) => {
                accumulate(grads, *x, self.value(*x).scale(2.0 * g[(0, 0)]));
            }
            Op::SumAll(x) => {
                let (r, c) = self.value(*x).shape();
                accumulate(grads, *x, DenseMatrix::filled(r, c, g[(0, 0)]));
            }
            Op::SoftmaxCrossEntropy {
                logits,
                target,
                probs,
            } => {
                let mut d = probs.clone();
                d[*target] -= 1.0;
                d.iter_mut().for_each(|x| *x *= g[(0, 0)]);
                accumulate(grads, *logits, DenseMatrix::from_vec(1, d.len(), d)?);
            }
            Op::SquaredError { pred, target } => {
                let diff = self.value(*pred)[(0, 0)] - target;
                accumulate(grads, *pred, DenseMatrix::filled(1, 1, 2.0 * diff * g[(0, 0)]));
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<DenseMatrix>], id: NodeId, delta: DenseMatrix) {
    match &mut grads[id.0] {
        Some(existing) => existing.add_assign_unchecked(&delta),
        slot @ None => *slot = Some(delta),
    }
}

/// Adjoint of `Y = Σ_k α_k P_k` with `P_k = s_k A P_{k−1} + t_k P_{k−1} + u_k P_{k−2}`.
///
/// Walks the recurrence from the highest order down: each term's adjoint
/// contributes `s_k Ḡ_k P_{k−1}ᵀ` to `Ā` and flows into the two lower terms.
fn poly_filter_adjoint(
    a: &DenseMatrix,
    coeffs: &[f64],
    basis: BasisKind,
    terms: &[DenseMatrix],
    g: &DenseMatrix,
) -> Result<(DenseMatrix, DenseMatrix, DenseMatrix)> {
    let order = terms.len() - 1;
    let mut dalpha = DenseMatrix::zeros(1, order + 1);
    let mut adj: Vec<DenseMatrix> = Vec::with_capacity(order + 1);
    for (k, term) in terms.iter().enumerate() {
        dalpha[(0, k)] = term.dot(g)?;
        adj.push(g.scale(coeffs[k]));
    }
    let mut da = DenseMatrix::zeros(a.rows(), a.cols());
    for k in (1..=order).rev() {
        let r = basis.recurrence(k);
        let gk = core::mem::replace(&mut adj[k], DenseMatrix::zeros(0, 0));
        da.axpy(r.shift, &linalg::matmul_transb(&gk, &terms[k - 1])?)?;
        let mut down = linalg::matmul_transa(a, &gk)?;
        if r.shift != 1.0 {
            down = down.scale(r.shift);
        }
        if r.carry != 0.0 {
            down.axpy(r.carry, &gk)?;
        }
        adj[k - 1].add_assign_unchecked(&down);
        if k >= 2 && r.lag != 0.0 {
            adj[k - 2].axpy(r.lag, &gk)?;
        }
    }
    let dv = adj.swap_remove(0);
    Ok((da, dv, dalpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DenseMatrix {
        DenseMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn sum_of_leaf_has_unit_gradient() {
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let x = tape.leaf(random(&mut rng, 3, 4));
        let s = tape.sum_all(x);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap(), &DenseMatrix::filled(3, 4, 1.0));
    }

    #[test]
    fn quadratic_form_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let a = random(&mut rng, 4, 4);
        let v = random(&mut rng, 4, 3);
        let mut tape = Tape::new();
        let an = tape.leaf(a.clone());
        let vn = tape.leaf(v.clone());
        let av = tape.matmul(an, vn).unwrap();
        let loss = tape.squared_norm(av);
        let g = tape.backward(loss).unwrap();
        let expected = linalg::matmul_transa(&a, &linalg::matmul(&a, &v).unwrap())
            .unwrap()
            .scale(2.0);
        assert!(g.get(vn).unwrap().max_abs_diff(&expected).unwrap() < 1e-13);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(DenseMatrix::zeros(2, 2));
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn unreachable_nodes_have_no_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(DenseMatrix::filled(1, 1, 2.0));
        let y = tape.leaf(DenseMatrix::filled(1, 1, 3.0));
        let l = tape.squared_norm(x);
        let g = tape.backward(l).unwrap();
        assert!(g.get(y).is_none());
        assert_eq!(g.get(x).unwrap()[(0, 0)], 4.0);
    }

    #[test]
    fn cross_entropy_range_check() {
        let mut tape = Tape::new();
        let l = tape.leaf(DenseMatrix::zeros(1, 2));
        assert!(matches!(tape.softmax_cross_entropy(l, 2), Err(Error::Data(_))));
    }

    /// Central differences of `f` w.r.t. every entry of every input.
    fn check<F>(inputs: Vec<DenseMatrix>, build: F)
    where
        F: Fn(&mut Tape, &[NodeId]) -> NodeId,
    {
        let eval = |vals: &[DenseMatrix]| {
            let mut tape = Tape::new();
            let ids: Vec<NodeId> = vals.iter().map(|v| tape.leaf(v.clone())).collect();
            let out = build(&mut tape, &ids);
            tape.value(out)[(0, 0)]
        };
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = inputs.iter().map(|v| tape.leaf(v.clone())).collect();
        let out = build(&mut tape, &ids);
        let grads = tape.backward(out).unwrap();
        let h = 1e-6;
        for (p, input) in inputs.iter().enumerate() {
            let analytic = grads.get_or_zeros(ids[p], input.rows(), input.cols());
            for e in 0..input.data().len() {
                let mut plus = inputs.clone();
                plus[p].data_mut()[e] += h;
                let mut minus = inputs.clone();
                minus[p].data_mut()[e] -= h;
                let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let a = analytic.data()[e];
                let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                assert!(err < 1e-6, "input {p} entry {e}: {a} vs {numeric}");
            }
        }
    }

    #[test]
    fn primitive_adjoints_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let inputs = vec![
            random(&mut rng, 4, 3),
            random(&mut rng, 3, 5),
            random(&mut rng, 1, 5),
            random(&mut rng, 1, 5),
            random(&mut rng, 1, 5),
        ];
        check(inputs, |t, ids| {
            let y = t.matmul(ids[0], ids[1]).unwrap();
            let y = t.add_row(y, ids[2]).unwrap();
            let y = t.layer_norm(y, ids[3], ids[4]).unwrap();
            let y = t.gelu(y);
            let k = t.matmul_transb(y, y).unwrap();
            let a = t.softmax_rows(k, 1.7);
            let z = t.matmul(a, y).unwrap();
            let z = t.scale(z, 0.3);
            let p = t.mean_rows(z);
            let s = t.sum(&[p, ids[4]]).unwrap();
            let s = t.squared_norm(s);
            let r0 = t.select_row(y, 1).unwrap();
            let r1 = t.affine_scalar(ids[2], ids[3], -0.7).unwrap();
            let st = t.stack_rows(&[r0, r1]).unwrap();
            let ce_in = t.mean_rows(st);
            let ce = t.softmax_cross_entropy(ce_in, 2).unwrap();
            let one = t.select_row(ids[2], 0).unwrap();
            let tot = t.sum_all(one);
            let se = t.squared_error(tot, 0.4).unwrap();
            t.sum(&[s, ce, se]).unwrap()
        });
    }

    #[test]
    fn poly_filter_adjoint_matches_finite_differences() {
        let bases = [
            BasisKind::Power,
            BasisKind::Chebyshev,
            BasisKind::Legendre,
            BasisKind::Jacobi { a: 0.5, b: -0.3 },
        ];
        for basis in bases {
            let mut rng = ChaCha8Rng::seed_from_u64(34);
            let inputs = vec![random(&mut rng, 5, 5), random(&mut rng, 5, 3), random(&mut rng, 1, 5)];
            check(inputs, |t, ids| {
                let a = t.softmax_rows(ids[0], 1.0);
                let y = t.poly_filter(a, ids[1], ids[2], basis).unwrap();
                t.squared_norm(y)
            });
        }
    }
}
