//! Batch objectives assembled on a tape.

use alloc::vec::Vec;

use crate::autodiff::{NodeId, Tape};
use crate::error::{Error, Result};
use crate::table::TableRow;

use super::{apply_mask, masked_pretrain_loss, supervised_loss, Bound, Model};

/// Mean supervised loss over a batch.
pub fn supervised(
    model: &Model,
    tape: &mut Tape,
    bound: &Bound,
    rows: &[TableRow],
    labels: &[f64],
) -> Result<NodeId> {
    if rows.is_empty() || rows.len() != labels.len() {
        return Err(Error::Data("batch needs equally many rows and labels".into()));
    }
    let mut terms = Vec::with_capacity(rows.len());
    for (row, &label) in rows.iter().zip(labels) {
        let x0 = model.embed_columns(tape, bound, row)?;
        let trace = model.encoder_forward(tape, bound, x0)?;
        let out = model.predict_head(tape, bound, trace.output())?;
        terms.push(supervised_loss(tape, out, label, model.task())?);
    }
    let total = tape.sum(&terms)?;
    Ok(tape.scale(total, 1.0 / rows.len() as f64))
}

/// Mean masked-reconstruction loss over a batch; `masks[i]` selects the
/// hidden cells of `rows[i]`.
pub fn pretrain(
    model: &Model,
    tape: &mut Tape,
    bound: &Bound,
    rows: &[TableRow],
    masks: &[Vec<bool>],
    lambda_ce: f64,
) -> Result<NodeId> {
    if rows.is_empty() || rows.len() != masks.len() {
        return Err(Error::Data("batch needs equally many rows and masks".into()));
    }
    let mut terms = Vec::with_capacity(rows.len());
    for (row, mask) in rows.iter().zip(masks) {
        let masked = apply_mask(row, mask, model.columns());
        let x0 = model.embed_columns(tape, bound, &masked)?;
        let trace = model.encoder_forward(tape, bound, x0)?;
        let mut recon = Vec::with_capacity(row.values.len());
        for (c, &m) in mask.iter().enumerate() {
            recon.push(if m {
                model.reconstruct(tape, bound, trace.output(), c)?
            } else {
                x0
            });
        }
        terms.push(masked_pretrain_loss(tape, &recon, &row.values, mask, lambda_ce)?);
    }
    let total = tape.sum(&terms)?;
    Ok(tape.scale(total, 1.0 / rows.len() as f64))
}

/// Supervised plus reconstruction loss.
pub fn combined(
    model: &Model,
    tape: &mut Tape,
    bound: &Bound,
    rows: &[TableRow],
    labels: &[f64],
    masks: &[Vec<bool>],
    lambda_ce: f64,
) -> Result<NodeId> {
    let s = supervised(model, tape, bound, rows, labels)?;
    let p = pretrain(model, tape, bound, rows, masks, lambda_ce)?;
    tape.add(s, p)
}
