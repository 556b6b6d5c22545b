use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::{NodeId, Tape};
use crate::error::{Error, Result};
use crate::math;
use crate::table::{ColumnKind, FeatureValue, Reserved, TableRow, Task};

fn class_index(label: f64, task: Task) -> Result<usize> {
    let classes = task.output_dim();
    if libm::trunc(label) != label || label < 0.0 || label >= classes as f64 {
        return Err(Error::Data(format!(
            "label {label} is not a class index below {classes}"
        )));
    }
    Ok(label as usize)
}

/// Per-example supervised loss on the tape: softmax cross-entropy for
/// classification, squared error for regression.
pub fn supervised_loss(tape: &mut Tape, head_output: NodeId, label: f64, task: Task) -> Result<NodeId> {
    match task {
        Task::Binary | Task::Multiclass { .. } => {
            tape.softmax_cross_entropy(head_output, class_index(label, task)?)
        }
        Task::Regression => tape.squared_error(head_output, label),
    }
}

/// Plain-value counterpart of [`supervised_loss`].
pub fn loss_supervised(head_output: &[f64], label: f64, task: Task) -> Result<f64> {
    match task {
        Task::Binary | Task::Multiclass { .. } => {
            let c = class_index(label, task)?;
            if head_output.len() != task.output_dim() {
                return Err(Error::Data(format!("{} logits for {task:?}", head_output.len())));
            }
            let max = head_output.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let log_z = max + math::ln(head_output.iter().map(|&x| math::exp(x - max)).sum());
            Ok(log_z - head_output[c])
        }
        Task::Regression => {
            let diff = head_output[0] - label;
            Ok(diff * diff)
        }
    }
}

/// Output of a per-column reconstruction head.
#[derive(Debug, Clone, PartialEq)]
pub enum Reconstruction {
    Logits(Vec<f64>),
    Value(f64),
}

/// `λ · CE + MSE`, each term averaged over its masked cells. Zero when
/// nothing is masked.
pub fn loss_masked_pretrain(
    pred: &[Reconstruction],
    target: &[FeatureValue],
    mask: &[bool],
    lambda_ce: f64,
) -> Result<f64> {
    if pred.len() != target.len() || mask.len() != target.len() {
        return Err(Error::Data("prediction, target and mask lengths differ".into()));
    }
    let (mut ce, mut n_ce, mut se, mut n_se) = (0.0, 0usize, 0.0, 0usize);
    for ((p, t), &m) in pred.iter().zip(target).zip(mask) {
        if !m {
            continue;
        }
        match (p, t) {
            (Reconstruction::Logits(l), FeatureValue::Categorical(idx)) => {
                let idx = *idx as usize;
                if idx >= l.len() {
                    return Err(Error::Data(format!("category {idx} outside {} logits", l.len())));
                }
                let max = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let log_z = max + math::ln(l.iter().map(|&x| math::exp(x - max)).sum());
                ce += log_z - l[idx];
                n_ce += 1;
            }
            (Reconstruction::Value(v), FeatureValue::Continuous(x)) => {
                se += (v - x) * (v - x);
                n_se += 1;
            }
            _ => return Err(Error::Data("reconstruction kind does not match target".into())),
        }
    }
    let mut loss = 0.0;
    if n_ce > 0 {
        loss += lambda_ce * ce / n_ce as f64;
    }
    if n_se > 0 {
        loss += se / n_se as f64;
    }
    Ok(loss)
}

/// Tape version of [`loss_masked_pretrain`]; `recon[c]` is the
/// reconstruction node of column `c` (only masked ones are read).
pub fn masked_pretrain_loss(
    tape: &mut Tape,
    recon: &[NodeId],
    target: &[FeatureValue],
    mask: &[bool],
    lambda_ce: f64,
) -> Result<NodeId> {
    if recon.len() != target.len() || mask.len() != target.len() {
        return Err(Error::Data("prediction, target and mask lengths differ".into()));
    }
    let mut ce_terms = Vec::new();
    let mut se_terms = Vec::new();
    for ((&r, t), &m) in recon.iter().zip(target).zip(mask) {
        if !m {
            continue;
        }
        match *t {
            FeatureValue::Categorical(idx) => ce_terms.push(tape.softmax_cross_entropy(r, idx as usize)?),
            FeatureValue::Continuous(x) => se_terms.push(tape.squared_error(r, x)?),
        }
    }
    let mut parts = Vec::with_capacity(2);
    if !ce_terms.is_empty() {
        let s = tape.sum(&ce_terms)?;
        parts.push(tape.scale(s, lambda_ce / ce_terms.len() as f64));
    }
    if !se_terms.is_empty() {
        let s = tape.sum(&se_terms)?;
        parts.push(tape.scale(s, 1.0 / se_terms.len() as f64));
    }
    if parts.is_empty() {
        return Ok(tape.leaf(crate::linalg::DenseMatrix::zeros(1, 1)));
    }
    tape.sum(&parts)
}

/// Independent Bernoulli(`p`) draw per column.
pub fn sample_mask<R: Rng>(rng: &mut R, n_columns: usize, p: f64) -> Vec<bool> {
    (0..n_columns).map(|_| rng.gen::<f64>() < p).collect()
}

/// Replaces masked continuous cells by `0` and masked categorical cells by
/// the reserved MASK index.
pub fn apply_mask(row: &TableRow, mask: &[bool], columns: &[ColumnKind]) -> TableRow {
    TableRow::new(
        row.values
            .iter()
            .zip(mask)
            .zip(columns)
            .map(|((v, &m), kind)| match (m, kind) {
                (false, _) => *v,
                (true, ColumnKind::Categorical { vocab }) => {
                    FeatureValue::Categorical(Reserved::Mask.index(*vocab))
                }
                (true, ColumnKind::Continuous) => FeatureValue::Continuous(0.0),
            })
            .collect(),
    )
}
