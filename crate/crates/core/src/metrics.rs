//! Evaluation metrics: AUROC (Mann-Whitney rank statistic) and R².

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
///
/// Computed from midranks in `O(n log n)`; equal to
/// `(#concordant + ½ #tied) / (#pos · #neg)`.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Data("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Undefined(
            "AUROC needs at least one positive and one negative label".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));

    // Sum of midranks (1-based) of the positives.
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let midrank = (start + end + 1) as f64 / 2.0;
        let pos_in_group = order[start..end].iter().filter(|&&i| labels[i]).count();
        rank_sum += midrank * pos_in_group as f64;
        start = end;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Macro-averaged one-vs-rest AUROC. `probs[i][c]` is the score of sample
/// `i` for class `c`; classes absent from (or covering all of) `labels`
/// are skipped.
pub fn auroc_one_vs_rest(probs: &[Vec<f64>], labels: &[usize], classes: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut used = 0;
    for c in 0..classes {
        let binary: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        let scores: Vec<f64> = probs.iter().map(|p| p[c]).collect();
        match auroc(&scores, &binary) {
            Ok(a) => {
                total += a;
                used += 1;
            }
            Err(Error::Undefined(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    if used == 0 {
        return Err(Error::Undefined("no class has both positives and negatives".into()));
    }
    Ok(total / used as f64)
}

/// `1 − SS_res / SS_tot`, with `SS_tot` about the mean of `targets`.
pub fn r_squared(preds: &[f64], targets: &[f64]) -> Result<f64> {
    if preds.len() != targets.len() {
        return Err(Error::Data(format!(
            "{} predictions for {} targets",
            preds.len(),
            targets.len()
        )));
    }
    if targets.len() < 2 {
        return Err(Error::Undefined("R² needs at least two targets".into()));
    }
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let ss_tot: f64 = targets.iter().map(|t| (t - mean) * (t - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Undefined("targets have zero variance".into()));
    }
    let ss_res: f64 = preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (t - p) * (t - p))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}
