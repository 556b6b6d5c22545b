use alloc::format;
use alloc::vec::Vec;

use crate::error::{shape_err, Result};
use crate::linalg::DenseMatrix;
use crate::math;

use super::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled (AdamW) decay, applied only to parameters flagged `decay`.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// First and second moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<DenseMatrix>,
    v: Vec<DenseMatrix>,
    t: u64,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<DenseMatrix> = params
            .params
            .iter()
            .map(|p| DenseMatrix::zeros(p.value.rows(), p.value.cols()))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &[DenseMatrix],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(shape_err(
            "adam_step",
            format!("{} grads for {} params", grads.len(), params.len()),
        ));
    }
    state.t += 1;
    let t = state.t as f64;
    let c1 = 1.0 - math::powf(cfg.beta1, t);
    let c2 = 1.0 - math::powf(cfg.beta2, t);
    for (i, (param, g)) in params.params.iter_mut().zip(grads).enumerate() {
        if param.value.shape() != g.shape() {
            return Err(shape_err("adam_step", format!("gradient for {}", param.name)));
        }
        let decay = if param.decay { cfg.weight_decay } else { 0.0 };
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (((w, &gj), mj), vj) in param
            .value
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *mj = cfg.beta1 * *mj + (1.0 - cfg.beta1) * gj;
            *vj = cfg.beta2 * *vj + (1.0 - cfg.beta2) * gj * gj;
            let m_hat = *mj / c1;
            let v_hat = *vj / c2;
            *w -= cfg.lr * (m_hat / (math::sqrt(v_hat) + cfg.eps) + decay * *w);
        }
    }
    Ok(())
}
