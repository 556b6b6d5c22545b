//! Reference computations that avoid the crate's recurrence code paths.
#![allow(dead_code)]

use cheatt_core::linalg::{self, DenseMatrix};
use cheatt_core::polyfilter::BasisKind;
use rand::seq::SliceRandom;
use rand::Rng;

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Generalized binomial coefficient `C(r, m)` for real `r`.
fn binom(r: f64, m: usize) -> f64 {
    (0..m).map(|i| r - i as f64).product::<f64>() / factorial(m)
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_pow(p: &[f64], n: usize) -> Vec<f64> {
    (0..n).fold(vec![1.0], |acc, _| poly_mul(&acc, p))
}

/// Ascending monomial coefficients of the degree-`k` basis polynomial, from
/// closed-form sums.
pub fn monomial(basis: BasisKind, k: usize) -> Vec<f64> {
    let mut c = vec![0.0; k + 1];
    match basis {
        BasisKind::Power => c[k] = 1.0,
        BasisKind::Chebyshev => {
            if k == 0 {
                c[0] = 1.0;
            } else {
                for m in 0..=k / 2 {
                    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                    c[k - 2 * m] = (k as f64 / 2.0) * sign * factorial(k - m - 1)
                        / (factorial(m) * factorial(k - 2 * m))
                        * 2f64.powi((k - 2 * m) as i32);
                }
            }
        }
        BasisKind::Legendre => {
            for m in 0..=k / 2 {
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                c[k - 2 * m] =
                    sign * binom(k as f64, m) * binom((2 * k - 2 * m) as f64, k) / 2f64.powi(k as i32);
            }
        }
        BasisKind::Jacobi { a, b } => {
            let n = k;
            let down = [-0.5, 0.5]; // (x − 1)/2
            let up = [0.5, 0.5]; // (x + 1)/2
            for s in 0..=n {
                let w = binom(n as f64 + a, n - s) * binom(n as f64 + b, s);
                let term = poly_mul(&poly_pow(&down, s), &poly_pow(&up, n - s));
                for (ci, t) in c.iter_mut().zip(&term) {
                    *ci += w * t;
                }
            }
            let lead = (1..=n).map(|i| n as f64 + a + b + i as f64).product::<f64>()
                / (2f64.powi(n as i32) * factorial(n));
            c.iter_mut().for_each(|x| *x /= lead);
        }
    }
    c
}

/// Monomial coefficients of `Σ α_k P_k`.
pub fn filter_monomial(basis: BasisKind, coeffs: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; coeffs.len()];
    for (k, &alpha) in coeffs.iter().enumerate() {
        for (o, m) in out.iter_mut().zip(monomial(basis, k)) {
            *o += alpha * m;
        }
    }
    out
}

pub fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

/// `U g(Λ) Uᵀ V` for symmetric `s`.
pub fn eigen_filter(s: &DenseMatrix, v: &DenseMatrix, basis: BasisKind, coeffs: &[f64]) -> DenseMatrix {
    let e = linalg::sym_eigen(s, 1e-15).unwrap();
    let poly = filter_monomial(basis, coeffs);
    let n = s.rows();
    let u = &e.eigenvectors;
    let g: Vec<f64> = e.eigenvalues.iter().map(|&l| horner(&poly, l)).collect();
    let h = DenseMatrix::from_fn(n, n, |i, j| (0..n).map(|k| u[(i, k)] * g[k] * u[(j, k)]).sum());
    linalg::matmul(&h, v).unwrap()
}

/// Symmetric doubly-stochastic, strictly positive matrix: a convex mix of
/// the uniform matrix and symmetrised random permutations.
pub fn symmetric_doubly_stochastic<R: Rng>(rng: &mut R, n: usize) -> DenseMatrix {
    let mut weights: Vec<f64> = (0..4).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let mut m = DenseMatrix::filled(n, n, weights[0] / n as f64);
    for &w in &weights[1..] {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        for i in 0..n {
            m[(i, perm[i])] += w / 2.0;
            m[(perm[i], i)] += w / 2.0;
        }
    }
    m
}

/// Row-stochastic matrix with uniform(0, 1) entries normalised by row.
pub fn random_stochastic<R: Rng>(rng: &mut R, n: usize) -> DenseMatrix {
    let mut m = DenseMatrix::from_fn(n, n, |_, _| rng.gen_range(0.0..1.0));
    for i in 0..n {
        let s: f64 = m.row(i).iter().sum();
        m.row_mut(i).iter_mut().for_each(|x| *x /= s);
    }
    m
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-scale..scale))
}

/// Orthogonal matrix from Gram-Schmidt on a random square matrix.
pub fn random_orthogonal<R: Rng>(rng: &mut R, n: usize) -> DenseMatrix {
    let m = random_matrix(rng, n, n, 1.0);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    for j in 0..n {
        let mut c = m.column(j);
        for q in &cols {
            let d: f64 = c.iter().zip(q).map(|(a, b)| a * b).sum();
            c.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
        }
        let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        c.iter_mut().for_each(|x| *x /= norm);
        cols.push(c);
    }
    DenseMatrix::from_fn(n, n, |i, j| cols[j][i])
}

pub fn rel_frobenius(got: &DenseMatrix, want: &DenseMatrix) -> f64 {
    got.sub(want).unwrap().frobenius_norm() / want.frobenius_norm().max(f64::MIN_POSITIVE)
}
