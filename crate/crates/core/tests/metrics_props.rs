use cheatt_core::metrics::{auroc, auroc_one_vs_rest, r_squared};
use cheatt_core::Error;
use proptest::prelude::*;

/// Mann-Whitney by explicit enumeration of positive/negative pairs.
fn auroc_pairs(scores: &[f64], labels: &[bool]) -> f64 {
    let mut hits = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    hits += 1.0;
                } else if scores[i] == scores[j] {
                    hits += 0.5;
                }
            }
        }
    }
    hits / pairs
}

fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..=50).prop_flat_map(|n| {
        (
            // Coarse grid so ties are common.
            prop::collection::vec((-8i32..8).prop_map(|k| k as f64 * 0.25), n),
            prop::collection::vec(any::<bool>(), n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn auroc_matches_pair_enumeration((scores, labels) in scored_labels()) {
        let has_both = labels.iter().any(|&l| l) && labels.iter().any(|&l| !l);
        match auroc(&scores, &labels) {
            Ok(a) => {
                prop_assert!(has_both);
                prop_assert!((a - auroc_pairs(&scores, &labels)).abs() <= 1e-12);
            }
            Err(e) => {
                prop_assert!(!has_both);
                prop_assert!(matches!(e, Error::Undefined(_)));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn auroc_is_invariant_to_monotone_maps(
        (scores, labels) in scored_labels(),
        a in 0.1f64..5.0,
        b in -3.0f64..3.0,
    ) {
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let base = auroc(&scores, &labels).unwrap();
        let affine: Vec<f64> = scores.iter().map(|s| a * s + b).collect();
        let cubic: Vec<f64> = scores.iter().map(|s| s * s * s + s).collect();
        let logistic: Vec<f64> = scores.iter().map(|s| 1.0 / (1.0 + (-a * s).exp())).collect();
        prop_assert_eq!(auroc(&affine, &labels).unwrap(), base);
        prop_assert_eq!(auroc(&cubic, &labels).unwrap(), base);
        prop_assert_eq!(auroc(&logistic, &labels).unwrap(), base);
        let flipped: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert!((auroc(&flipped, &labels).unwrap() - (1.0 - base)).abs() <= 1e-12);
    }

    #[test]
    fn r_squared_matches_direct_formula(
        targets in prop::collection::vec(-50.0f64..50.0, 2..40),
        noise in prop::collection::vec(-20.0f64..20.0, 40),
    ) {
        let mean = targets.iter().sum::<f64>() / targets.len() as f64;
        let ss_tot: f64 = targets.iter().map(|t| (t - mean).powi(2)).sum();
        prop_assume!(ss_tot > 1e-9);
        let preds: Vec<f64> = targets.iter().zip(&noise).map(|(t, e)| t + e).collect();
        let ss_res: f64 = preds.iter().zip(&targets).map(|(p, t)| (p - t).powi(2)).sum();
        let r2 = r_squared(&preds, &targets).unwrap();
        prop_assert!((r2 - (1.0 - ss_res / ss_tot)).abs() <= 1e-12 * (1.0 + (ss_res / ss_tot)));
        prop_assert!(r2 <= 1.0);
    }
}

#[test]
fn auroc_examples() {
    let s = [0.9, 0.8, 0.2, 0.1];
    assert_eq!(auroc(&s, &[true, true, false, false]).unwrap(), 1.0);
    assert_eq!(auroc(&s, &[true, false, true, false]).unwrap(), 0.75);
    assert_eq!(auroc(&[0.3; 4], &[true, false, true, false]).unwrap(), 0.5);
    assert!(matches!(auroc(&s, &[true; 4]), Err(Error::Undefined(_))));
}

#[test]
fn one_vs_rest_is_macro_average() {
    let probs = vec![
        vec![0.7, 0.2, 0.1],
        vec![0.2, 0.5, 0.3],
        vec![0.1, 0.3, 0.6],
        vec![0.4, 0.4, 0.2],
        vec![0.3, 0.1, 0.6],
    ];
    let labels = [0, 1, 2, 1, 0];
    let mut total = 0.0;
    for c in 0..3 {
        let s: Vec<f64> = probs.iter().map(|p| p[c]).collect();
        let y: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        total += auroc_pairs(&s, &y);
    }
    let got = auroc_one_vs_rest(&probs, &labels, 3).unwrap();
    assert!((got - total / 3.0).abs() < 1e-12);
}

#[test]
fn negative_r_squared() {
    let targets = [1.0, 2.0, 3.0, 4.0];
    // Constant prediction far from the mean: SS_res = Σ(t − 60)², SS_tot = 5.
    let preds = [60.0; 4];
    let ss_res: f64 = targets.iter().map(|t| (t - 60.0f64).powi(2)).sum();
    let r2 = r_squared(&preds, &targets).unwrap();
    assert_eq!(r2, 1.0 - ss_res / 5.0);
    assert!(r2 < -118.3);
    assert_eq!(r_squared(&[2.5; 4], &targets).unwrap(), 0.0);
    assert_eq!(r_squared(&targets, &targets).unwrap(), 1.0);
    assert!(matches!(r_squared(&[1.0, 2.0], &[3.0, 3.0]), Err(Error::Undefined(_))));
}
