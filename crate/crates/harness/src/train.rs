//! Pretraining, fine-tuning with early stopping, and evaluation.

use std::time::Instant;

use cheatt_core::autodiff::Tape;
use cheatt_core::diagnostics::{layer_report, OversmoothingReport, ReportOptions};
use cheatt_core::metrics::{auroc, auroc_one_vs_rest, r_squared};
use cheatt_core::nn::{
    adam_step, objective, sample_mask, AdamConfig, AdamState, Model, ParamStore,
};
use cheatt_core::table::{TableRow, Task};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, TrainSpec};
use crate::data::{Schema, Split, TableDataset};
use crate::error::{Error, Result};

/// Offset separating the batch/mask stream from the model-init stream.
const STREAM_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pretrain,
    Finetune,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub phase: Phase,
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub seed: u64,
    pub task: Task,
    /// `auroc` for classification, `r2` for regression.
    pub metric: String,
    pub test_metric: f64,
    pub epochs: Vec<EpochLog>,
    /// Fine-tune epoch whose parameters were kept.
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
    pub n_params: usize,
    pub inference_seconds_per_1000: f64,
    pub report: OversmoothingReport,
}

impl ExperimentRecord {
    pub fn mean_epoch_seconds(&self, phase: Phase) -> Option<f64> {
        let ts: Vec<f64> = self
            .epochs
            .iter()
            .filter(|e| e.phase == phase)
            .map(|e| e.seconds)
            .collect();
        (!ts.is_empty()).then(|| ts.iter().sum::<f64>() / ts.len() as f64)
    }

    /// The record with every wall-clock field zeroed, for comparing runs.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        r.inference_seconds_per_1000 = 0.0;
        for e in &mut r.epochs {
            e.seconds = 0.0;
        }
        r
    }
}

pub struct Experiment {
    pub record: ExperimentRecord,
    pub model: Model,
    pub schema: Schema,
}

fn adam_config(t: &TrainSpec) -> AdamConfig {
    AdamConfig {
        lr: t.lr,
        weight_decay: t.weight_decay,
        ..AdamConfig::default()
    }
}

fn apply_grads(
    model: &mut Model,
    tape: &Tape,
    loss: cheatt_core::autodiff::NodeId,
    bound: &cheatt_core::nn::Bound,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<f64> {
    let value = tape.value(loss)[(0, 0)];
    if !value.is_finite() {
        return Err(Error::Data(format!("loss became non-finite ({value})")));
    }
    let grads = model.param_grads(&tape.backward(loss)?, bound);
    adam_step(model.params_mut(), &grads, state, cfg)?;
    Ok(value)
}

/// Mean supervised loss without parameter updates.
pub fn evaluate_loss(model: &Model, rows: &[TableRow], labels: &[f64], batch: usize) -> Result<f64> {
    let mut total = 0.0;
    for (r, l) in rows.chunks(batch).zip(labels.chunks(batch)) {
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape);
        let loss = objective::supervised(model, &mut tape, &bound, r, l)?;
        total += tape.value(loss)[(0, 0)] * r.len() as f64;
    }
    Ok(total / rows.len() as f64)
}

/// Test metric: AUROC (macro one-vs-rest for multiclass) or R².
pub fn evaluate_metric(model: &Model, rows: &[TableRow], labels: &[f64]) -> Result<f64> {
    let preds = rows
        .iter()
        .map(|r| model.predict(r))
        .collect::<cheatt_core::Result<Vec<_>>>()?;
    Ok(match model.task() {
        Task::Binary => {
            let scores: Vec<f64> = preds.iter().map(|p| p[1]).collect();
            let y: Vec<bool> = labels.iter().map(|&l| l == 1.0).collect();
            auroc(&scores, &y)?
        }
        Task::Multiclass { classes } => {
            let y: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
            auroc_one_vs_rest(&preds, &y, classes as usize)?
        }
        Task::Regression => {
            let p: Vec<f64> = preds.iter().map(|p| p[0]).collect();
            r_squared(&p, labels)?
        }
    })
}

fn shuffled(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}

/// Runs the full pipeline on the configured data source.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Experiment> {
    run_experiment_with(cfg, &cfg.data.load()?, |_| {})
}

/// Runs the pipeline on `data`; `on_epoch` sees every epoch log as soon as
/// it is complete.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    data: &TableDataset,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Experiment> {
    cfg.validate()?;
    let t = &cfg.train;
    let model_cfg = cfg.model.model_config(data.schema.columns.len(), cfg.seed);
    let mut model = Model::new(model_cfg, data.column_kinds(), data.task())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ STREAM_OFFSET);
    let (train_rows, train_labels) = data.split(Split::Train);
    let (valid_rows, valid_labels) = data.split(Split::Valid);
    let (test_rows, test_labels) = data.split(Split::Test);
    let adam = adam_config(t);
    let mut epochs = Vec::new();
    let n_cols = model.columns().len();

    let mut state = AdamState::new(model.params());
    for epoch in 0..t.pretrain_epochs {
        let start = Instant::now();
        let mut total = 0.0;
        for batch in shuffled(&mut rng, train_rows.len()).chunks(t.batch_size) {
            let rows: Vec<TableRow> = batch.iter().map(|&i| train_rows[i].clone()).collect();
            let masks: Vec<Vec<bool>> = rows
                .iter()
                .map(|_| sample_mask(&mut rng, n_cols, t.mask_prob))
                .collect();
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape);
            let loss = objective::pretrain(&model, &mut tape, &bound, &rows, &masks, t.lambda_ce)?;
            total += apply_grads(&mut model, &tape, loss, &bound, &mut state, &adam)? * rows.len() as f64;
        }
        let log = EpochLog {
            phase: Phase::Pretrain,
            epoch,
            train_loss: total / train_rows.len() as f64,
            valid_loss: None,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&log);
        epochs.push(log);
    }

    let mut state = AdamState::new(model.params());
    let mut best: Option<(f64, usize, ParamStore)> = None;
    let mut stopped_early = false;
    for epoch in 0..t.finetune_epochs {
        let start = Instant::now();
        let mut total = 0.0;
        for batch in shuffled(&mut rng, train_rows.len()).chunks(t.batch_size) {
            let rows: Vec<TableRow> = batch.iter().map(|&i| train_rows[i].clone()).collect();
            let labels: Vec<f64> = batch.iter().map(|&i| train_labels[i]).collect();
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape);
            let loss = objective::supervised(&model, &mut tape, &bound, &rows, &labels)?;
            total += apply_grads(&mut model, &tape, loss, &bound, &mut state, &adam)? * rows.len() as f64;
        }
        let seconds = start.elapsed().as_secs_f64();
        let valid_loss = if valid_rows.is_empty() {
            None
        } else {
            Some(evaluate_loss(&model, &valid_rows, &valid_labels, t.batch_size)?)
        };
        let log = EpochLog {
            phase: Phase::Finetune,
            epoch,
            train_loss: total / train_rows.len() as f64,
            valid_loss,
            seconds,
        };
        on_epoch(&log);
        epochs.push(log);
        if let Some(v) = valid_loss {
            if best.as_ref().map_or(true, |b| v < b.0) {
                best = Some((v, epoch, model.params().clone()));
            } else if t.patience > 0 && epoch - best.as_ref().map_or(0, |b| b.1) >= t.patience {
                stopped_early = true;
                break;
            }
        }
    }
    let best_epoch = best.as_ref().map(|b| b.1);
    if let Some((_, _, params)) = best {
        *model.params_mut() = params;
    }

    let (eval_rows, eval_labels) = if test_rows.is_empty() {
        (&train_rows, &train_labels)
    } else {
        (&test_rows, &test_labels)
    };
    let start = Instant::now();
    let test_metric = evaluate_metric(&model, eval_rows, eval_labels)?;
    let inference_seconds_per_1000 = start.elapsed().as_secs_f64() * 1000.0 / eval_rows.len() as f64;

    let report_rows: Vec<TableRow> = eval_rows.iter().take(cfg.report.rows.max(1)).cloned().collect();
    let report = layer_report(
        &model,
        &report_rows,
        0..model.config().depth + 1,
        &ReportOptions {
            grid_points: cfg.report.grid_points,
            convergence_steps: cfg.report.convergence_steps,
        },
    )?;

    let record = ExperimentRecord {
        seed: cfg.seed,
        task: data.task(),
        metric: if data.task().is_classification() { "auroc" } else { "r2" }.into(),
        test_metric,
        epochs,
        best_epoch,
        stopped_early,
        n_params: model.params().scalar_count(),
        inference_seconds_per_1000,
        report,
    };
    Ok(Experiment {
        record,
        model,
        schema: data.schema.clone(),
    })
}
