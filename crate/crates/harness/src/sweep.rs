//! Cartesian sweeps over one model axis and a seed list.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use cheatt_core::nn::AttentionKind;
use cheatt_core::polyfilter::BasisKind;
use serde::{Deserialize, Serialize};

use crate::config::{basis_label, parse_attention, parse_basis, ExperimentConfig};
use crate::data::TableDataset;
use crate::error::{Error, Result};
use crate::train::{run_experiment_with, Phase};

#[derive(Debug, Clone, PartialEq)]
pub enum SweepAxis {
    Order(Vec<usize>),
    Basis(Vec<BasisKind>),
    Attention(Vec<AttentionKind>),
}

impl SweepAxis {
    /// Parses an axis name and a comma-separated value list. Jacobi
    /// parameters may be written `jacobi(a;b)` inside the list.
    pub fn parse(axis: &str, values: &str) -> Result<Self> {
        let items: Vec<&str> = values.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
        if items.is_empty() {
            return Err(Error::Config("sweep needs at least one axis value".into()));
        }
        match axis {
            "order" | "order_k" | "k" => items
                .iter()
                .map(|s| {
                    s.parse::<usize>()
                        .map_err(|_| Error::Config(format!("bad order {s:?}")))
                })
                .collect::<Result<_>>()
                .map(SweepAxis::Order),
            "basis" => items
                .iter()
                .map(|s| parse_basis(&s.replace(';', ",")))
                .collect::<Result<_>>()
                .map(SweepAxis::Basis),
            "attention" | "attention_kind" => items
                .iter()
                .map(|s| parse_attention(s))
                .collect::<Result<_>>()
                .map(SweepAxis::Attention),
            _ => Err(Error::Config(format!(
                "unknown sweep axis {axis:?} (order, basis or attention)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Order(_) => "order_k",
            SweepAxis::Basis(_) => "basis",
            SweepAxis::Attention(_) => "attention_kind",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SweepAxis::Order(v) => v.len(),
            SweepAxis::Basis(v) => v.len(),
            SweepAxis::Attention(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn label(&self, i: usize) -> String {
        match self {
            SweepAxis::Order(v) => v[i].to_string(),
            SweepAxis::Basis(v) => basis_label(v[i]),
            SweepAxis::Attention(v) => match v[i] {
                AttentionKind::Vanilla => "vanilla".into(),
                AttentionKind::CheAtt => "cheatt".into(),
            },
        }
    }

    fn apply(&self, i: usize, cfg: &mut ExperimentConfig) {
        match self {
            SweepAxis::Order(v) => cfg.model.order = v[i],
            SweepAxis::Basis(v) => cfg.model.basis = v[i],
            SweepAxis::Attention(v) => cfg.model.attention = v[i],
        }
    }
}

/// Aggregate of one axis value over the seed list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub axis: String,
    pub value: String,
    pub metric: String,
    /// Successful runs as `(seed, metric)`.
    pub runs: Vec<(u64, f64)>,
    /// Failed runs as `(seed, error text)`.
    pub failures: Vec<(u64, String)>,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std: f64,
    pub mean_epoch_seconds: f64,
}

struct RunOutcome {
    metric: std::result::Result<(f64, String, f64), String>,
}

pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs every (axis value, seed) pair on `data` using up to `jobs` threads.
/// A failing run is recorded in its cell and does not stop the sweep.
pub fn sweep(cfg: &ExperimentConfig, axis: &SweepAxis, data: &TableDataset, jobs: usize) -> Result<Vec<SweepCell>> {
    cfg.validate()?;
    if axis.is_empty() {
        return Err(Error::Config("sweep axis has no values".into()));
    }
    let seeds = &cfg.seeds;
    let total = axis.len() * seeds.len();
    let next = AtomicUsize::new(0);
    let outcomes: Mutex<Vec<Option<RunOutcome>>> = Mutex::new((0..total).map(|_| None).collect());
    let worker = || loop {
        let job = next.fetch_add(1, Ordering::Relaxed);
        if job >= total {
            break;
        }
        let (vi, si) = (job / seeds.len(), job % seeds.len());
        let mut run_cfg = cfg.clone();
        axis.apply(vi, &mut run_cfg);
        run_cfg.seed = seeds[si];
        let metric = run_experiment_with(&run_cfg, data, |_| {})
            .map(|e| {
                let secs = e.record.mean_epoch_seconds(Phase::Finetune).unwrap_or(0.0);
                (e.record.test_metric, e.record.metric.clone(), secs)
            })
            .map_err(|e| e.to_string());
        outcomes.lock().expect("sweep worker panicked")[job] = Some(RunOutcome { metric });
    };
    std::thread::scope(|s| {
        for _ in 1..jobs.clamp(1, total) {
            s.spawn(worker);
        }
        worker();
    });
    let outcomes = outcomes.into_inner().expect("sweep worker panicked");

    let mut cells = Vec::with_capacity(axis.len());
    for vi in 0..axis.len() {
        let mut runs = Vec::new();
        let mut failures = Vec::new();
        let mut metric_name = String::new();
        let mut secs = Vec::new();
        for (si, &seed) in seeds.iter().enumerate() {
            match &outcomes[vi * seeds.len() + si].as_ref().expect("every job ran").metric {
                Ok((m, name, s)) => {
                    runs.push((seed, *m));
                    metric_name.clone_from(name);
                    secs.push(*s);
                }
                Err(e) => failures.push((seed, e.clone())),
            }
        }
        let values: Vec<f64> = runs.iter().map(|r| r.1).collect();
        let (mean, std) = mean_std(&values);
        cells.push(SweepCell {
            axis: axis.name().into(),
            value: axis.label(vi),
            metric: metric_name,
            runs,
            failures,
            mean,
            std,
            mean_epoch_seconds: mean_std(&secs).0,
        });
    }
    Ok(cells)
}

/// `axis,value,metric,n,mean,std,mean±std,failures` with one row per cell.
pub fn sweep_csv(cells: &[SweepCell]) -> String {
    let mut out = String::from("axis,value,metric,n,mean,std,mean_pm_std,mean_epoch_seconds,failures\n");
    for c in cells {
        out.push_str(&format!(
            "{},\"{}\",{},{},{},{},{:.3}±{:.3},{},{}\n",
            c.axis,
            c.value,
            c.metric,
            c.runs.len(),
            c.mean,
            c.std,
            c.mean,
            c.std,
            c.mean_epoch_seconds,
            c.failures.len()
        ));
    }
    out
}
