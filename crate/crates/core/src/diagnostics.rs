//! Oversmoothing diagnostics for encoder feature maps and attention maps.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::attention::{power_convergence_curve, AttentionMap};
use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix};
use crate::math;
use crate::nn::Model;
use crate::polyfilter::{spectral_response, uniform_grid, ResponseCurve};
use crate::table::TableRow;

/// Mean pairwise cosine similarity of the nonzero rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineSummary {
    pub mean: f64,
    pub excluded_zero_rows: usize,
}

/// Mean of `cos(x_i, x_j)` over unordered pairs of nonzero token rows.
pub fn token_cosine_similarity(x: &DenseMatrix) -> Result<CosineSummary> {
    let mut unit_rows: Vec<Vec<f64>> = Vec::with_capacity(x.rows());
    let mut excluded = 0;
    for i in 0..x.rows() {
        let row = x.row(i);
        let norm = math::sqrt(row.iter().map(|v| v * v).sum());
        if norm > 0.0 {
            unit_rows.push(row.iter().map(|v| v / norm).collect());
        } else {
            excluded += 1;
        }
    }
    let n = unit_rows.len();
    if n < 2 {
        return Err(Error::Undefined(format!(
            "cosine similarity needs two nonzero tokens, found {n}"
        )));
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let c: f64 = unit_rows[i].iter().zip(&unit_rows[j]).map(|(a, b)| a * b).sum();
            total += c.clamp(-1.0, 1.0);
        }
    }
    Ok(CosineSummary {
        mean: total / (n * (n - 1) / 2) as f64,
        excluded_zero_rows: excluded,
    })
}

/// Singular values divided by the largest one.
pub fn normalized_singular_values(x: &DenseMatrix) -> Result<Vec<f64>> {
    let sigma = linalg::svd(x, 1e-15)?.sigma;
    let top = sigma.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return Err(Error::Undefined("singular values of a zero matrix".into()));
    }
    Ok(sigma.iter().map(|s| s / top).collect())
}

/// Eigenvalues of `½(A + Aᵀ)`, descending.
pub fn attention_spectrum(a: &AttentionMap) -> Result<Vec<f64>> {
    let m = a.matrix();
    let sym = m.add(&m.transpose())?.scale(0.5);
    let tol = 1e-14 * sym.frobenius_norm().max(1.0);
    Ok(linalg::sym_eigen(&sym, tol)?.eigenvalues)
}

/// `‖X − 1 x̄ᵀ‖_F / ‖X‖_F`: the share of feature energy outside the
/// token-mean (lowest graph frequency) component.
pub fn high_frequency_ratio(x: &DenseMatrix) -> Result<f64> {
    let total = x.frobenius_norm();
    if total == 0.0 {
        return Err(Error::Undefined("energy ratio of a zero matrix".into()));
    }
    let n = x.rows() as f64;
    let mean: Vec<f64> = (0..x.cols())
        .map(|j| (0..x.rows()).map(|i| x[(i, j)]).sum::<f64>() / n)
        .collect();
    let centered = DenseMatrix::from_fn(x.rows(), x.cols(), |i, j| x[(i, j)] - mean[j]);
    Ok(centered.frobenius_norm() / total)
}

/// Metrics of one encoder layer (layer 0 is the input embedding).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LayerMetrics {
    pub layer: usize,
    /// Batch mean of the token cosine similarity.
    pub cosine_similarity: f64,
    pub excluded_zero_rows: usize,
    /// Batch mean of `σ_i / σ_1`.
    pub normalized_singular_values: Vec<f64>,
    /// Batch mean of [`high_frequency_ratio`] (feature-space spectral view).
    pub high_frequency_ratio: f64,
    /// Coefficients of the filter this layer applies (empty for layer 0).
    pub filter_coeffs: Vec<f64>,
    /// Batch- and head-averaged spectrum of `½(A + Aᵀ)`.
    pub attention_eigenvalues: Vec<f64>,
    /// Filter response `g(λ)` on `attention_eigenvalues`.
    pub response_on_spectrum: Vec<f64>,
    /// Filter response on a uniform grid over `[−1, 1]`.
    pub response_grid: Option<ResponseCurve>,
    /// `δ_k` of head 0 of the first sample, with the layer input as `V`.
    pub convergence: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OversmoothingReport {
    pub layers: Vec<LayerMetrics>,
}

impl OversmoothingReport {
    /// Index of the first normalized singular value below `threshold` for
    /// `layer`, or the vector length if none is.
    pub fn singular_drop_index(&self, layer: usize, threshold: f64) -> Option<usize> {
        let l = self.layers.iter().find(|m| m.layer == layer)?;
        let s = &l.normalized_singular_values;
        Some(s.iter().position(|&x| x < threshold).unwrap_or(s.len()))
    }
}

/// Options for [`layer_report`].
#[derive(Debug, Clone)]
pub struct ReportOptions {
    pub grid_points: usize,
    pub convergence_steps: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            grid_points: 41,
            convergence_steps: 20,
        }
    }
}

fn mean_vectors(vs: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = vs.first() else {
        return Vec::new();
    };
    let mut acc = vec![0.0; first.len()];
    for v in vs {
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    acc.iter().map(|a| a / vs.len() as f64).collect()
}

/// Runs the encoder over `rows` and aggregates per-layer metrics over the
/// batch for the layers in `layers` (clamped to the model depth).
pub fn layer_report(
    model: &Model,
    rows: &[TableRow],
    layers: Range<usize>,
    options: &ReportOptions,
) -> Result<OversmoothingReport> {
    if rows.is_empty() {
        return Err(Error::Data("layer report needs at least one row".into()));
    }
    let activations = rows
        .iter()
        .map(|r| model.activations(r))
        .collect::<Result<Vec<_>>>()?;
    let filters = model.layer_filters();
    let grid = uniform_grid(options.grid_points);
    let end = layers.end.min(model.config().depth + 1);

    let mut out = Vec::new();
    for layer in layers.start..end {
        let mut cos_total = 0.0;
        let mut excluded = 0;
        let mut hf_total = 0.0;
        let mut sv = Vec::with_capacity(rows.len());
        let mut spectra = Vec::new();
        for act in &activations {
            let x = &act.layers[layer];
            let c = token_cosine_similarity(x)?;
            cos_total += c.mean;
            excluded += c.excluded_zero_rows;
            hf_total += high_frequency_ratio(x)?;
            sv.push(normalized_singular_values(x)?);
            if layer > 0 {
                for map in &act.attention[layer - 1] {
                    spectra.push(attention_spectrum(map)?);
                }
            }
        }
        let batch = rows.len() as f64;
        let mut metrics = LayerMetrics {
            layer,
            cosine_similarity: cos_total / batch,
            excluded_zero_rows: excluded,
            normalized_singular_values: mean_vectors(&sv),
            high_frequency_ratio: hf_total / batch,
            filter_coeffs: Vec::new(),
            attention_eigenvalues: Vec::new(),
            response_on_spectrum: Vec::new(),
            response_grid: None,
            convergence: Vec::new(),
        };
        if layer > 0 {
            let filter = &filters[layer - 1];
            let eig = mean_vectors(&spectra);
            metrics.filter_coeffs = filter.coeffs().to_vec();
            metrics.response_on_spectrum = spectral_response(filter, &eig).values;
            metrics.attention_eigenvalues = eig;
            metrics.response_grid = Some(spectral_response(filter, &grid));
            let first = &activations[0];
            metrics.convergence = power_convergence_curve(
                &first.attention[layer - 1][0],
                &first.layers[layer - 1],
                options.convergence_steps,
            )?;
        }
        out.push(metrics);
    }
    Ok(OversmoothingReport { layers: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cosine_examples() {
        let same = DenseMatrix::from_rows(&[[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]]).unwrap();
        assert!((token_cosine_similarity(&same).unwrap().mean - 1.0).abs() < 1e-15);
        let orth = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 3.0]]).unwrap();
        assert_eq!(token_cosine_similarity(&orth).unwrap().mean, 0.0);
        let one = DenseMatrix::from_rows(&[[1.0, 0.0]]).unwrap();
        assert!(matches!(token_cosine_similarity(&one), Err(Error::Undefined(_))));
        let with_zero = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 0.0], [1.0, 1.0]]).unwrap();
        let c = token_cosine_similarity(&with_zero).unwrap();
        assert_eq!(c.excluded_zero_rows, 1);
        assert!((c.mean - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn cosine_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let x = DenseMatrix::from_fn(6, 8, |_, _| rng.gen_range(-1.0..1.0));
        let mut sum = 0.0;
        let mut pairs = 0;
        for i in 0..6 {
            for j in 0..6 {
                if i < j {
                    let dot: f64 = (0..8).map(|k| x[(i, k)] * x[(j, k)]).sum();
                    let ni: f64 = (0..8).map(|k| x[(i, k)].powi(2)).sum::<f64>().sqrt();
                    let nj: f64 = (0..8).map(|k| x[(j, k)].powi(2)).sum::<f64>().sqrt();
                    sum += dot / (ni * nj);
                    pairs += 1;
                }
            }
        }
        let got = token_cosine_similarity(&x).unwrap().mean;
        assert!((got - sum / pairs as f64).abs() < 1e-14);
    }

    #[test]
    fn singular_value_examples() {
        let rank_one = DenseMatrix::from_fn(4, 3, |i, j| (i + 1) as f64 * (j as f64 - 0.5));
        let s = normalized_singular_values(&rank_one).unwrap();
        assert_eq!(s[0], 1.0);
        assert!(s[1..].iter().all(|&x| x < 1e-14));
        assert_eq!(normalized_singular_values(&DenseMatrix::identity(4)).unwrap(), vec![1.0; 4]);
        assert!(normalized_singular_values(&DenseMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn spectrum_examples() {
        let u = AttentionMap::new(DenseMatrix::filled(4, 4, 0.25)).unwrap();
        let e = attention_spectrum(&u).unwrap();
        assert!((e[0] - 1.0).abs() < 1e-14);
        assert!(e[1..].iter().all(|x| x.abs() < 1e-14));
        let h = AttentionMap::new(DenseMatrix::filled(2, 2, 0.5)).unwrap();
        let e = attention_spectrum(&h).unwrap();
        assert!((e[0] - 1.0).abs() < 1e-15 && e[1].abs() < 1e-15);
    }

    #[test]
    fn high_frequency_ratio_bounds() {
        let same = DenseMatrix::from_rows(&[[1.0, 2.0], [1.0, 2.0]]).unwrap();
        assert_eq!(high_frequency_ratio(&same).unwrap(), 0.0);
        let opposite = DenseMatrix::from_rows(&[[1.0, 2.0], [-1.0, -2.0]]).unwrap();
        assert_eq!(high_frequency_ratio(&opposite).unwrap(), 1.0);
    }
}
