//! Matrix-polynomial graph filters over attention maps.
//!
//! A filter is `H = Σ_k α_k P_k(A)` for a polynomial basis `{P_k}`; the
//! output is `H V`. Basis terms are generated by three-term recurrences on
//! the running `n × d` block, so `P_k(A)` is never formed as an `n × n`
//! matrix and the cost is `O(j · n² · d)` for order `j`.
//!
//! All recurrences share the form
//!
//! ```text
//! P_0 = I,   P_k = s_k · A P_{k−1} + t_k · P_{k−1} + u_k · P_{k−2}
//! ```
//!
//! with the coefficients given by [`BasisKind::recurrence`]. The same table
//! drives the block recursion, the scalar spectral response and the
//! reverse-mode adjoint in [`crate::autodiff`].

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::attention::AttentionMap;
use crate::error::{shape_err, Error, Result};
use crate::linalg::DenseMatrix;
use crate::math;

/// Default polynomial order.
pub const DEFAULT_ORDER: usize = 5;

/// Default Jacobi parameters `(a, b)`.
pub const DEFAULT_JACOBI: (f64, f64) = (1.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum BasisKind {
    /// Monomials `A^k`.
    Power,
    /// `T_k = 2A T_{k−1} − T_{k−2}`.
    Chebyshev,
    /// Standard normalization, `P_k(1) = 1`.
    Legendre,
    /// Monic Jacobi polynomials for the weight `(1 − x)^a (1 + x)^b`.
    Jacobi { a: f64, b: f64 },
}

impl BasisKind {
    pub fn jacobi_default() -> Self {
        BasisKind::Jacobi {
            a: DEFAULT_JACOBI.0,
            b: DEFAULT_JACOBI.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let BasisKind::Jacobi { a, b } = *self {
            if !(a > -1.0 && b > -1.0) {
                return Err(Error::Parameter(format!(
                    "Jacobi parameters must exceed -1, got a = {a}, b = {b}"
                )));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            BasisKind::Power => "power",
            BasisKind::Chebyshev => "chebyshev",
            BasisKind::Legendre => "legendre",
            BasisKind::Jacobi { .. } => "jacobi",
        }
    }

    /// `(s_k, t_k, u_k)` for `k ≥ 1`.
    pub fn recurrence(&self, k: usize) -> Recurrence {
        debug_assert!(k >= 1);
        let kf = k as f64;
        match *self {
            BasisKind::Power => Recurrence::new(1.0, 0.0, 0.0),
            BasisKind::Chebyshev if k == 1 => Recurrence::new(1.0, 0.0, 0.0),
            BasisKind::Chebyshev => Recurrence::new(2.0, 0.0, -1.0),
            BasisKind::Legendre => {
                Recurrence::new((2.0 * kf - 1.0) / kf, 0.0, -(kf - 1.0) / kf)
            }
            BasisKind::Jacobi { a, b } => {
                let m = k - 1;
                Recurrence::new(1.0, -jacobi_shift(a, b, m), -jacobi_coupling(a, b, m))
            }
        }
    }
}

/// `β_m` in the monic Jacobi recurrence `π_{m+1} = (x − β_m) π_m − γ_m π_{m−1}`.
fn jacobi_shift(a: f64, b: f64, m: usize) -> f64 {
    if m == 0 {
        return (b - a) / (a + b + 2.0);
    }
    let s = 2.0 * m as f64 + a + b;
    (b * b - a * a) / (s * (s + 2.0))
}

/// `γ_m` in the monic Jacobi recurrence (`γ_0` multiplies `π_{−1} = 0`).
fn jacobi_coupling(a: f64, b: f64, m: usize) -> f64 {
    match m {
        0 => 0.0,
        1 => {
            let s = 2.0 + a + b;
            4.0 * (1.0 + a) * (1.0 + b) / (s * s * (s + 1.0))
        }
        _ => {
            let mf = m as f64;
            let s = 2.0 * mf + a + b;
            4.0 * mf * (mf + a) * (mf + b) * (mf + a + b) / (s * s * (s + 1.0) * (s - 1.0))
        }
    }
}

/// Coefficients of one recurrence step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recurrence {
    /// Multiplies `A P_{k−1}`.
    pub shift: f64,
    /// Multiplies `P_{k−1}`.
    pub carry: f64,
    /// Multiplies `P_{k−2}`.
    pub lag: f64,
}

impl Recurrence {
    const fn new(shift: f64, carry: f64, lag: f64) -> Self {
        Self { shift, carry, lag }
    }
}

/// `H = Σ_k α_k P_k(A)` with learnable, sign-unconstrained `α`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PolyFilter {
    pub basis: BasisKind,
    coeffs: Vec<f64>,
}

impl PolyFilter {
    pub fn new(basis: BasisKind, coeffs: Vec<f64>) -> Result<Self> {
        basis.validate()?;
        if coeffs.is_empty() {
            return Err(Error::Parameter("a filter needs at least α₀".into()));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Parameter("filter coefficients must be finite".into()));
        }
        Ok(Self { basis, coeffs })
    }

    /// Initial coefficients: `α₀ = 1/2`, `α₁ = 1`, `α_k = 2^{−k}` for `k ≥ 2`.
    pub fn initial_coeffs(order: usize) -> Vec<f64> {
        (0..=order)
            .map(|k| match k {
                0 => 0.5,
                1 => 1.0,
                _ => math::powf(2.0, -(k as f64)),
            })
            .collect()
    }

    pub fn with_initial_coeffs(basis: BasisKind, order: usize) -> Result<Self> {
        Self::new(basis, Self::initial_coeffs(order))
    }

    /// `α = (0, 1, 0, …)`: plain attention `A V` whenever `P_1(A) = A`.
    pub fn vanilla(basis: BasisKind, order: usize) -> Result<Self> {
        let mut c = vec![0.0; order.max(1) + 1];
        c[1] = 1.0;
        Self::new(basis, c)
    }

    /// `α = (1, 0, …)`: the identity filter.
    pub fn identity(basis: BasisKind, order: usize) -> Result<Self> {
        let mut c = vec![0.0; order + 1];
        c[0] = 1.0;
        Self::new(basis, c)
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Scalar `g(λ) = Σ α_k P_k(λ)`.
    pub fn evaluate(&self, lambda: f64) -> f64 {
        let mut prev2 = 0.0;
        let mut prev = 1.0;
        let mut acc = self.coeffs[0];
        for (k, &alpha) in self.coeffs.iter().enumerate().skip(1) {
            let r = self.basis.recurrence(k);
            let next = r.shift * lambda * prev + r.carry * prev + r.lag * prev2;
            acc += alpha * next;
            prev2 = prev;
            prev = next;
        }
        acc
    }
}

/// `[P_0(A) V, …, P_order(A) V]`.
pub fn basis_term_apply(
    a: &AttentionMap,
    v: &DenseMatrix,
    basis: BasisKind,
    order: usize,
) -> Result<Vec<DenseMatrix>> {
    basis_terms(a.matrix(), v, basis, order)
}

/// Block recursion on an arbitrary square matrix; used by the autodiff tape
/// where `A` is an intermediate value rather than a validated map.
pub(crate) fn basis_terms(
    a: &DenseMatrix,
    v: &DenseMatrix,
    basis: BasisKind,
    order: usize,
) -> Result<Vec<DenseMatrix>> {
    if !a.is_square() || a.cols() != v.rows() {
        return Err(shape_err(
            "basis_term_apply",
            format!(
                "A is {}x{}, V is {}x{}",
                a.rows(),
                a.cols(),
                v.rows(),
                v.cols()
            ),
        ));
    }
    basis.validate()?;
    let mut terms: Vec<DenseMatrix> = Vec::with_capacity(order + 1);
    terms.push(v.clone());
    for k in 1..=order {
        let r = basis.recurrence(k);
        let mut next = crate::linalg::matmul(a, &terms[k - 1])?;
        if r.shift != 1.0 {
            next = next.scale(r.shift);
        }
        if r.carry != 0.0 {
            next.axpy(r.carry, &terms[k - 1])?;
        }
        if r.lag != 0.0 && k >= 2 {
            next.axpy(r.lag, &terms[k - 2])?;
        }
        terms.push(next);
    }
    Ok(terms)
}

/// Weighted sum `Σ α_k P_k` of precomputed basis terms.
pub(crate) fn combine_terms(terms: &[DenseMatrix], coeffs: &[f64]) -> DenseMatrix {
    let (r, c) = terms[0].shape();
    let mut out = DenseMatrix::zeros(r, c);
    for (term, &alpha) in terms.iter().zip(coeffs) {
        for (o, &t) in out.data_mut().iter_mut().zip(term.data()) {
            *o += alpha * t;
        }
    }
    out
}

/// `H V = Σ_k α_k P_k(A) V`.
pub fn apply_filter(a: &AttentionMap, v: &DenseMatrix, f: &PolyFilter) -> Result<DenseMatrix> {
    debug_assert!(
        crate::attention::spectral_radius_estimate(a.matrix(), 50) <= 1.0 + 1e-8,
        "attention map spectral radius exceeds 1"
    );
    let terms = basis_term_apply(a, v, f.basis, f.order())?;
    Ok(combine_terms(&terms, f.coeffs()))
}

/// Smallest `j ≤ k_max` with `‖A^{j+1} V − A^j V‖_F ≤ bound`, or `k_max` if
/// the bound is never met.
pub fn truncation_order(a: &AttentionMap, v: &DenseMatrix, bound: f64, k_max: usize) -> Result<usize> {
    let mut current = v.clone();
    for j in 0..=k_max {
        let next = a.apply(&current)?;
        if next.sub(&current)?.frobenius_norm() <= bound {
            return Ok(j);
        }
        current = next;
    }
    Ok(k_max)
}

/// Sampled scalar response of a filter.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ResponseCurve {
    pub lambdas: Vec<f64>,
    pub values: Vec<f64>,
    /// Indices of grid points outside `[−1, 1]`; their values are still
    /// evaluated.
    pub out_of_domain: Vec<usize>,
}

/// `g(λ)` at each grid point.
pub fn spectral_response(f: &PolyFilter, lambda_grid: &[f64]) -> ResponseCurve {
    let out_of_domain = lambda_grid
        .iter()
        .enumerate()
        .filter(|(_, &l)| !(-1.0..=1.0).contains(&l))
        .map(|(i, _)| i)
        .collect();
    ResponseCurve {
        lambdas: lambda_grid.to_vec(),
        values: lambda_grid.iter().map(|&l| f.evaluate(l)).collect(),
        out_of_domain,
    }
}

/// `points` evenly spaced values covering `[−1, 1]`.
pub fn uniform_grid(points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..points)
            .map(|i| -1.0 + 2.0 * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

/// `|α_k|` for each filter, in order.
pub fn coefficient_decay_profile(filters: &[PolyFilter]) -> Vec<Vec<f64>> {
    filters
        .iter()
        .map(|f| f.coeffs().iter().map(|&c| math::abs(c)).collect())
        .collect()
}
