use alloc::string::String;
use alloc::vec::Vec;

use crate::autodiff::Tape;
use crate::error::Result;
use crate::math;
use crate::table::TableRow;

use super::{objective, Model};

/// Worst relative error of one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_err: f64,
    /// Entries compared (both derivatives above the noise floor).
    pub compared: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GradCheckReport {
    pub step: f64,
    pub params: Vec<ParamCheck>,
    pub max_rel_err: f64,
}

/// Entries where both derivatives fall below this are skipped.
pub const GRADCHECK_FLOOR: f64 = 1e-8;

/// Compares backpropagated gradients with central differences for every
/// scalar of every parameter. The objective is the supervised loss on
/// `rows` plus the masked-reconstruction loss under `masks`, so the
/// prediction head and reconstruction heads are both exercised.
pub fn gradient_check(
    model: &Model,
    rows: &[TableRow],
    labels: &[f64],
    masks: &[Vec<bool>],
    lambda_ce: f64,
    step: f64,
) -> Result<GradCheckReport> {
    let eval = |m: &Model| -> Result<f64> {
        let mut tape = Tape::new();
        let bound = m.bind(&mut tape);
        let loss = objective::combined(m, &mut tape, &bound, rows, labels, masks, lambda_ce)?;
        Ok(tape.value(loss)[(0, 0)])
    };

    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let loss = objective::combined(model, &mut tape, &bound, rows, labels, masks, lambda_ce)?;
    let grads = model.param_grads(&tape.backward(loss)?, &bound);

    let mut probe = model.clone();
    let mut params = Vec::with_capacity(grads.len());
    let mut worst = 0.0f64;
    for (p, analytic) in grads.iter().enumerate() {
        let mut max_rel_err = 0.0f64;
        let mut compared = 0;
        for e in 0..analytic.data().len() {
            let original = probe.params().params[p].value.data()[e];
            probe.params_mut().params[p].value.data_mut()[e] = original + step;
            let plus = eval(&probe)?;
            probe.params_mut().params[p].value.data_mut()[e] = original - step;
            let minus = eval(&probe)?;
            probe.params_mut().params[p].value.data_mut()[e] = original;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic.data()[e];
            let scale = math::abs(a).max(math::abs(numeric));
            if scale < GRADCHECK_FLOOR {
                continue;
            }
            compared += 1;
            max_rel_err = max_rel_err.max(math::abs(a - numeric) / scale);
        }
        worst = worst.max(max_rel_err);
        params.push(ParamCheck {
            name: model.params().params[p].name.clone(),
            max_rel_err,
            compared,
        });
    }
    Ok(GradCheckReport {
        step,
        params,
        max_rel_err: worst,
    })
}
