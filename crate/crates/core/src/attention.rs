//! Scaled dot-product attention maps viewed as Markov transition matrices.
//!
//! A softmax attention map is row-stochastic and strictly positive, which
//! makes it an irreducible, aperiodic chain. This module checks those
//! conditions, runs damped PageRank iteration (row-stochastic convention,
//! `π' = (1 − ε) Mᵀ π + ε / N`) and measures how fast `A^k V` settles.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::linalg::{self, DenseMatrix};
use crate::math;

/// Entries at or below this are treated as structural zeros, not underflow.
pub const POSITIVITY_FLOOR: f64 = 1e-300;

/// Tolerance on row sums for a matrix to count as stochastic.
pub const STOCHASTIC_TOL: f64 = 1e-10;

/// L1 step size at which PageRank iteration is considered converged.
pub const FIXED_POINT_TOL: f64 = 1e-14;

const FIXED_POINT_MAX_ITERS: usize = 1_000_000;
const GAP_ITERS: usize = 400;

/// Row-stochastic, strictly positive square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    matrix: DenseMatrix,
}

impl AttentionMap {
    /// Validates stochasticity and strict positivity.
    pub fn new(matrix: DenseMatrix) -> Result<Self> {
        check_row_stochastic(&matrix, "AttentionMap::new")?;
        if let Some(&bad) = matrix.data().iter().find(|&&x| x <= 0.0) {
            return Err(Error::Contract(format!(
                "attention map entry {bad} is not strictly positive"
            )));
        }
        Ok(Self { matrix })
    }

    /// Wraps a square matrix without validating it. Used for probing the
    /// Markov checks with matrices softmax can never produce (e.g. `I`).
    pub fn from_matrix_unchecked(matrix: DenseMatrix) -> Self {
        Self { matrix }
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> DenseMatrix {
        self.matrix
    }

    /// Token count.
    pub fn n(&self) -> usize {
        self.matrix.rows()
    }

    /// `A · V`.
    pub fn apply(&self, v: &DenseMatrix) -> Result<DenseMatrix> {
        linalg::matmul(&self.matrix, v)
    }
}

fn check_row_stochastic(m: &DenseMatrix, op: &'static str) -> Result<()> {
    if !m.is_square() {
        return Err(shape_err(op, format!("{}x{} is not square", m.rows(), m.cols())));
    }
    for i in 0..m.rows() {
        let s: f64 = m.row(i).iter().sum();
        if math::abs(s - 1.0) > STOCHASTIC_TOL {
            return Err(Error::Contract(format!("row {i} sums to {s}, not 1")));
        }
    }
    Ok(())
}

/// `softmax(q kᵀ / √d)`.
pub fn compute_attention(q: &DenseMatrix, k: &DenseMatrix, d: usize) -> Result<AttentionMap> {
    if q.shape() != k.shape() || q.cols() != d {
        return Err(shape_err(
            "compute_attention",
            format!(
                "q {}x{}, k {}x{}, d {d}",
                q.rows(),
                q.cols(),
                k.rows(),
                k.cols()
            ),
        ));
    }
    let logits = linalg::matmul_transb(q, k)?;
    Ok(AttentionMap {
        matrix: linalg::softmax_rows(&logits, math::sqrt(d as f64)),
    })
}

/// Result of [`verify_markov_conditions`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MarkovReport {
    pub is_stochastic: bool,
    pub min_entry: f64,
    pub is_irreducible: bool,
    pub is_aperiodic: bool,
    /// `1 − |λ₂|`, clamped to `[0, 1]`.
    pub spectral_gap_estimate: f64,
}

/// Checks the three PageRank conditions on an attention map.
///
/// Strict positivity certifies both irreducibility (complete graph) and
/// aperiodicity (every node has a self-loop).
pub fn verify_markov_conditions(a: &AttentionMap, eps: f64) -> MarkovReport {
    let m = a.matrix();
    let is_stochastic =
        (0..m.rows()).all(|i| math::abs(m.row(i).iter().sum::<f64>() - 1.0) <= eps);
    let min_entry = m.data().iter().copied().fold(f64::INFINITY, f64::min);
    let positive = min_entry > POSITIVITY_FLOOR;
    MarkovReport {
        is_stochastic,
        min_entry,
        is_irreducible: positive,
        is_aperiodic: positive,
        spectral_gap_estimate: 1.0 - second_eigenvalue_modulus(m),
    }
}

/// Stationary distribution `π = Aᵀ π` of a row-stochastic matrix, by power
/// iteration from the uniform vector.
pub fn stationary_distribution(m: &DenseMatrix) -> Vec<f64> {
    let n = m.rows();
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..FIXED_POINT_MAX_ITERS.min(100_000) {
        let mut next = left_multiply(m, &pi);
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= total);
        let step = l1_distance(&next, &pi);
        pi = next;
        if step <= FIXED_POINT_TOL {
            break;
        }
    }
    pi
}

/// Estimates `|λ₂|` of a row-stochastic matrix by power iteration on the
/// deflated operator `B = A − 1 πᵀ`, where `π` is the stationary left
/// eigenvector. The modulus comes from the geometric mean of late-stage
/// norm ratios, so complex-conjugate pairs are handled.
pub fn second_eigenvalue_modulus(m: &DenseMatrix) -> f64 {
    let n = m.rows();
    if n < 2 {
        return 0.0;
    }
    let pi = stationary_distribution(m);
    let mut y: Vec<f64> = (0..n).map(|i| libm::sin(i as f64 + 1.0)).collect();
    deflate(&mut y, &pi);
    if !normalize(&mut y) {
        return 0.0;
    }
    let burn_in = GAP_ITERS / 2;
    let mut log_sum = 0.0;
    for it in 0..GAP_ITERS {
        let mut next = right_multiply(m, &y);
        deflate(&mut next, &pi);
        let norm = math::sqrt(next.iter().map(|x| x * x).sum());
        if norm <= POSITIVITY_FLOOR {
            return 0.0;
        }
        next.iter_mut().for_each(|x| *x /= norm);
        y = next;
        if it >= burn_in {
            log_sum += math::ln(norm);
        }
    }
    let modulus = math::exp(log_sum / (GAP_ITERS - burn_in) as f64);
    modulus.clamp(0.0, 1.0)
}

fn deflate(y: &mut [f64], pi: &[f64]) {
    let proj: f64 = y.iter().zip(pi).map(|(a, b)| a * b).sum();
    y.iter_mut().for_each(|x| *x -= proj);
}

fn normalize(y: &mut [f64]) -> bool {
    let norm = math::sqrt(y.iter().map(|x| x * x).sum());
    if norm <= POSITIVITY_FLOOR {
        return false;
    }
    y.iter_mut().for_each(|x| *x /= norm);
    true
}

/// `M y`.
fn right_multiply(m: &DenseMatrix, y: &[f64]) -> Vec<f64> {
    (0..m.rows())
        .map(|i| m.row(i).iter().zip(y).map(|(a, b)| a * b).sum())
        .collect()
}

/// `Mᵀ x`.
fn left_multiply(m: &DenseMatrix, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for (i, &xi) in x.iter().enumerate() {
        for (o, &mij) in out.iter_mut().zip(m.row(i)) {
            *o += xi * mij;
        }
    }
    out
}

fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| math::abs(x - y)).sum()
}

/// Largest |eigenvalue| estimate by normalized power iteration.
pub fn spectral_radius_estimate(m: &DenseMatrix, iters: usize) -> f64 {
    let n = m.rows();
    let mut y: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * libm::sin(i as f64)).collect();
    normalize(&mut y);
    let mut estimate = 0.0;
    for _ in 0..iters {
        let mut next = right_multiply(m, &y);
        let norm = math::sqrt(next.iter().map(|x| x * x).sum());
        if norm <= POSITIVITY_FLOOR {
            return 0.0;
        }
        next.iter_mut().for_each(|x| *x /= norm);
        y = next;
        estimate = norm;
    }
    estimate
}

/// Iterate of damped PageRank.
#[derive(Debug, Clone, PartialEq)]
pub struct PageRankState {
    /// `π^{(t)}`, sums to one.
    pub scores: Vec<f64>,
    /// `t`.
    pub iteration: usize,
    /// L1 size of the last step; the error curve replaces it with the
    /// distance to the fixed point.
    pub err: f64,
}

impl PageRankState {
    pub fn uniform(n: usize) -> Self {
        Self {
            scores: vec![1.0 / n as f64; n],
            iteration: 0,
            err: 0.0,
        }
    }

    pub fn from_scores(scores: Vec<f64>) -> Result<Self> {
        let total: f64 = scores.iter().sum();
        if math::abs(total - 1.0) > STOCHASTIC_TOL || scores.iter().any(|&x| x < 0.0) {
            return Err(Error::Contract(format!(
                "PageRank scores must be a distribution (sum {total})"
            )));
        }
        Ok(Self {
            scores,
            iteration: 0,
            err: 0.0,
        })
    }
}

fn check_damping(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::Parameter(format!(
            "damping eps must lie in (0, 1], got {eps}"
        )));
    }
    Ok(())
}

fn pagerank_update(m: &DenseMatrix, scores: &[f64], eps: f64) -> Vec<f64> {
    let reset = eps / scores.len() as f64;
    let mut next = left_multiply(m, scores);
    next.iter_mut().for_each(|x| *x = (1.0 - eps) * *x + reset);
    next
}

/// One damped power-iteration step `π' = (1 − ε) Mᵀ π + ε / N`.
pub fn pagerank_step(m: &DenseMatrix, pi: &PageRankState, eps: f64) -> Result<PageRankState> {
    check_damping(eps)?;
    check_row_stochastic(m, "pagerank_step")?;
    if pi.scores.len() != m.rows() {
        return Err(shape_err(
            "pagerank_step",
            format!("{} scores for {} nodes", pi.scores.len(), m.rows()),
        ));
    }
    let total: f64 = pi.scores.iter().sum();
    if math::abs(total - 1.0) > STOCHASTIC_TOL {
        return Err(Error::Contract(format!("scores sum to {total}, not 1")));
    }
    let next = pagerank_update(m, &pi.scores, eps);
    Ok(PageRankState {
        err: l1_distance(&next, &pi.scores),
        scores: next,
        iteration: pi.iteration + 1,
    })
}

/// Fixed point `π*`: iterates from the uniform vector until successive
/// iterates differ by at most [`FIXED_POINT_TOL`] in L1.
pub fn pagerank_fixed_point(m: &DenseMatrix, eps: f64) -> Result<Vec<f64>> {
    let mut state = PageRankState::uniform(m.rows());
    for _ in 0..FIXED_POINT_MAX_ITERS {
        state = pagerank_step(m, &state, eps)?;
        if state.err <= FIXED_POINT_TOL {
            return Ok(state.scores);
        }
    }
    Err(Error::Convergence {
        op: "pagerank_fixed_point",
        sweeps: FIXED_POINT_MAX_ITERS,
    })
}

/// `Err(t) = Σ_v |π_v^{(t)} − π_v^*|` for `t = 0..=t_max`, from the uniform
/// start.
pub fn pagerank_error_curve(m: &DenseMatrix, eps: f64, t_max: usize) -> Result<Vec<f64>> {
    pagerank_error_curve_from(m, eps, PageRankState::uniform(m.rows()), t_max)
}

/// As [`pagerank_error_curve`] from an arbitrary starting distribution.
pub fn pagerank_error_curve_from(
    m: &DenseMatrix,
    eps: f64,
    start: PageRankState,
    t_max: usize,
) -> Result<Vec<f64>> {
    let fixed = pagerank_fixed_point(m, eps)?;
    let mut state = start;
    let mut curve = Vec::with_capacity(t_max + 1);
    curve.push(l1_distance(&state.scores, &fixed));
    for _ in 0..t_max {
        state = pagerank_step(m, &state, eps)?;
        state.err = l1_distance(&state.scores, &fixed);
        curve.push(state.err);
    }
    Ok(curve)
}

/// `δ_k = ‖A^k V − A^{k−1} V‖_F` for `k = 1..=k_max`, by repeated
/// left-multiplication.
pub fn power_convergence_curve(
    a: &AttentionMap,
    v: &DenseMatrix,
    k_max: usize,
) -> Result<Vec<f64>> {
    let mut current = v.clone();
    let mut deltas = Vec::with_capacity(k_max);
    for _ in 0..k_max {
        let next = a.apply(&current)?;
        deltas.push(next.sub(&current)?.frobenius_norm());
        current = next;
    }
    Ok(deltas)
}
