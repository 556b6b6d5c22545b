mod common;

use cheatt_core::attention::{compute_attention, AttentionMap};
use cheatt_core::linalg::DenseMatrix;
use cheatt_core::polyfilter::{
    apply_filter, basis_term_apply, spectral_response, truncation_order, BasisKind, PolyFilter,
};
use common::oracle;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BASES: [BasisKind; 4] = [
    BasisKind::Power,
    BasisKind::Chebyshev,
    BasisKind::Legendre,
    BasisKind::Jacobi { a: 1.0, b: 1.0 },
];

#[test]
fn closed_forms_agree_on_low_orders() {
    // T_3 = 4x³ − 3x, P_3 = (5x³ − 3x)/2, monic Jacobi(1,1) degree 2 = x² − 1/5
    assert_eq!(oracle::monomial(BasisKind::Chebyshev, 3), vec![0.0, -3.0, 0.0, 4.0]);
    assert_eq!(oracle::monomial(BasisKind::Legendre, 3), vec![0.0, -1.5, 0.0, 2.5]);
    let j2 = oracle::monomial(BasisKind::Jacobi { a: 1.0, b: 1.0 }, 2);
    assert!((j2[0] + 0.2).abs() < 1e-15 && j2[1].abs() < 1e-15 && (j2[2] - 1.0).abs() < 1e-15);
}

#[test]
fn eigen_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut bases = BASES.to_vec();
    bases.push(BasisKind::Jacobi { a: 0.5, b: -0.25 });
    for trial in 0..20 {
        let s = oracle::symmetric_doubly_stochastic(&mut rng, 5);
        let a = AttentionMap::new(s.clone()).unwrap();
        let v = oracle::random_matrix(&mut rng, 5, 3, 1.0);
        for &basis in &bases {
            for order in 0..=8 {
                let coeffs: Vec<f64> = (0..=order).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let f = PolyFilter::new(basis, coeffs.clone()).unwrap();
                let got = apply_filter(&a, &v, &f).unwrap();
                let want = oracle::eigen_filter(&s, &v, basis, &coeffs);
                let err = oracle::rel_frobenius(&got, &want);
                assert!(err <= 1e-10, "trial {trial} {basis:?} j={order}: {err:e}");
            }
        }
    }
}

#[test]
fn spectral_response_matches_monomial_horner() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let grid: Vec<f64> = (0..=50).map(|i| -1.0 + i as f64 / 25.0).collect();
    for basis in BASES {
        for order in 0..=8 {
            let coeffs: Vec<f64> = (0..=order).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let f = PolyFilter::new(basis, coeffs.clone()).unwrap();
            let poly = oracle::filter_monomial(basis, &coeffs);
            let r = spectral_response(&f, &grid);
            for (&l, &g) in grid.iter().zip(&r.values) {
                assert!((g - oracle::horner(&poly, l)).abs() < 1e-11, "{basis:?} {order} at {l}");
            }
        }
    }
}

#[test]
fn chebyshev_trig_identity() {
    for k in 0..=32 {
        let mut coeffs = vec![0.0; k + 1];
        coeffs[k] = 1.0;
        let f = PolyFilter::new(BasisKind::Chebyshev, coeffs).unwrap();
        for i in 0..100 {
            let theta = std::f64::consts::PI * i as f64 / 99.0;
            let err = (f.evaluate(theta.cos()) - (k as f64 * theta).cos()).abs();
            assert!(err <= 1e-10, "k={k} θ={theta}: {err:e}");
        }
    }
}

#[test]
fn vanilla_recovery_all_bases() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    for _ in 0..20 {
        let q = oracle::random_matrix(&mut rng, 7, 4, 2.0);
        let k = oracle::random_matrix(&mut rng, 7, 4, 2.0);
        let a = compute_attention(&q, &k, 4).unwrap();
        let v = oracle::random_matrix(&mut rng, 7, 5, 1.0);
        let av = a.apply(&v).unwrap();
        for basis in BASES {
            let f = PolyFilter::vanilla(basis, 6).unwrap();
            let got = apply_filter(&a, &v, &f).unwrap();
            assert!(got.max_abs_diff(&av).unwrap() <= 1e-12);
        }
    }
}

#[test]
fn basis_terms_use_block_recurrence_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let s = oracle::symmetric_doubly_stochastic(&mut rng, 6);
    let a = AttentionMap::new(s).unwrap();
    let v = oracle::random_matrix(&mut rng, 6, 2, 1.0);
    for basis in BASES {
        let terms = basis_term_apply(&a, &v, basis, 7).unwrap();
        assert_eq!(terms.len(), 8);
        assert!(terms.iter().all(|t| t.shape() == (6, 2)));
    }
}

fn arb_case() -> impl Strategy<Value = (u64, usize)> {
    (any::<u64>(), 0usize..4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn filter_is_linear_in_coeffs_and_signal((seed, b) in arb_case(), s1 in -2.0f64..2.0, s2 in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis = BASES[b];
        let q = oracle::random_matrix(&mut rng, 5, 3, 1.5);
        let k = oracle::random_matrix(&mut rng, 5, 3, 1.5);
        let a = compute_attention(&q, &k, 3).unwrap();
        let v1 = oracle::random_matrix(&mut rng, 5, 4, 1.0);
        let v2 = oracle::random_matrix(&mut rng, 5, 4, 1.0);
        let c1: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c2: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f1 = PolyFilter::new(basis, c1.clone()).unwrap();
        let f2 = PolyFilter::new(basis, c2.clone()).unwrap();
        let mix: Vec<f64> = c1.iter().zip(&c2).map(|(x, y)| s1 * x + s2 * y).collect();
        let fm = PolyFilter::new(basis, mix).unwrap();

        let lhs = apply_filter(&a, &v1, &fm).unwrap();
        let mut rhs = apply_filter(&a, &v1, &f1).unwrap().scale(s1);
        rhs.axpy(s2, &apply_filter(&a, &v1, &f2).unwrap()).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-12);

        let vm = {
            let mut m = v1.scale(s1);
            m.axpy(s2, &v2).unwrap();
            m
        };
        let lhs = apply_filter(&a, &vm, &f1).unwrap();
        let mut rhs = apply_filter(&a, &v1, &f1).unwrap().scale(s1);
        rhs.axpy(s2, &apply_filter(&a, &v2, &f1).unwrap()).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-12);
    }

    #[test]
    fn truncation_order_monotone_in_bound(seed in any::<u64>(), b1 in 1e-12f64..1.0, b2 in 1e-12f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = oracle::random_matrix(&mut rng, 8, 4, 2.0);
        let k = oracle::random_matrix(&mut rng, 8, 4, 2.0);
        let a = compute_attention(&q, &k, 4).unwrap();
        let v = oracle::random_matrix(&mut rng, 8, 4, 1.0);
        let (lo, hi) = if b1 < b2 { (b1, b2) } else { (b2, b1) };
        let j_lo = truncation_order(&a, &v, lo, 60).unwrap();
        let j_hi = truncation_order(&a, &v, hi, 60).unwrap();
        prop_assert!(j_hi <= j_lo);
    }
}

#[test]
fn uniform_map_terms_are_closed_form() {
    // J idempotent: T_2(J) = 2J − I.
    let a = AttentionMap::new(DenseMatrix::filled(3, 3, 1.0 / 3.0)).unwrap();
    let v = DenseMatrix::from_rows(&[[1.0], [2.0], [6.0]]).unwrap();
    let t = basis_term_apply(&a, &v, BasisKind::Chebyshev, 2).unwrap();
    let want = DenseMatrix::from_rows(&[[5.0], [4.0], [0.0]]).unwrap();
    assert!(t[2].max_abs_diff(&want).unwrap() < 1e-14);
}
