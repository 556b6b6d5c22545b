//! Long-format CSV export of oversmoothing reports.

use std::fmt::Write as _;

use cheatt_core::diagnostics::OversmoothingReport;

/// One `layer,metric,index,value` row per number in the report. Scalars
/// use index 0.
pub fn report_csv(report: &OversmoothingReport) -> String {
    let mut out = String::from("layer,metric,index,value\n");
    let mut push = |layer: usize, metric: &str, values: &[f64]| {
        for (i, v) in values.iter().enumerate() {
            let _ = writeln!(out, "{layer},{metric},{i},{v}");
        }
    };
    for l in &report.layers {
        push(l.layer, "cosine_similarity", &[l.cosine_similarity]);
        push(l.layer, "excluded_zero_rows", &[l.excluded_zero_rows as f64]);
        push(l.layer, "high_frequency_ratio", &[l.high_frequency_ratio]);
        push(l.layer, "normalized_singular_value", &l.normalized_singular_values);
        push(l.layer, "filter_coeff", &l.filter_coeffs);
        push(l.layer, "attention_eigenvalue", &l.attention_eigenvalues);
        push(l.layer, "response_on_spectrum", &l.response_on_spectrum);
        if let Some(g) = &l.response_grid {
            push(l.layer, "response_grid_lambda", &g.lambdas);
            push(l.layer, "response_grid_value", &g.values);
        }
        push(l.layer, "convergence_delta", &l.convergence);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use cheatt_core::diagnostics::LayerMetrics;

    #[test]
    fn rows_are_long_format() {
        let report = OversmoothingReport {
            layers: vec![LayerMetrics {
                layer: 0,
                cosine_similarity: 0.25,
                excluded_zero_rows: 0,
                normalized_singular_values: vec![1.0, 0.5],
                high_frequency_ratio: 0.75,
                filter_coeffs: vec![],
                attention_eigenvalues: vec![],
                response_on_spectrum: vec![],
                response_grid: None,
                convergence: vec![],
            }],
        };
        let csv = report_csv(&report);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "layer,metric,index,value");
        assert_eq!(lines.len(), 1 + 3 + 2);
        assert!(lines.contains(&"0,normalized_singular_value,1,0.5"));
    }
}
