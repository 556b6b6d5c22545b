//! Command-line surface of the `cheatt` binary.

use std::io::Write;
use std::path::{Path, PathBuf};

use cheatt_core::attention::{pagerank_error_curve, power_convergence_curve, verify_markov_conditions};
use cheatt_core::diagnostics::{layer_report, ReportOptions};
use cheatt_core::nn::{gradient_check, Model, ModelConfig, PolyTemplate};
use clap::{Args, Parser, Subcommand};

use crate::checkpoint::Checkpoint;
use crate::config::{parse_attention, parse_basis, ExperimentConfig};
use crate::data::{read_raw, Encoded, TaskHint};
use crate::error::{Error, Result};
use crate::report::report_csv;
use crate::sweep::{sweep, sweep_csv, SweepAxis};
use crate::synthetic::{generate_synthetic, SyntheticSpec};
use crate::train::run_experiment_with;

#[derive(Debug, Parser)]
#[command(name = "cheatt", version, about = "Polynomial-filter attention for tabular transformers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset (with a split column) as CSV.
    Synth(SynthArgs),
    /// Train and evaluate one model.
    Train(TrainArgs),
    /// Repeat training over an axis of values and a seed list.
    Sweep(SweepArgs),
    /// Oversmoothing report of a checkpoint on a CSV file.
    Diagnose(DiagnoseArgs),
    /// Convergence of A^k V and PageRank error for one attention map.
    Convergence(ConvergenceArgs),
    /// Compare backpropagated gradients with finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub rows: usize,
    #[arg(long, default_value_t = 6)]
    pub continuous: usize,
    #[arg(long, default_value_t = 2)]
    pub categorical: usize,
    #[arg(long, default_value_t = 4)]
    pub vocab: u32,
    #[arg(long, value_parser = parse_task, default_value = "binary")]
    pub task: TaskHint,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

fn parse_task(s: &str) -> std::result::Result<TaskHint, String> {
    match s {
        "binary" => Ok(TaskHint::Binary),
        "multiclass" => Ok(TaskHint::Multiclass),
        "regression" => Ok(TaskHint::Regression),
        _ => Err(format!("unknown task {s:?}")),
    }
}

/// Flags that override fields of the experiment config file.
#[derive(Debug, Args, Default)]
pub struct Overrides {
    /// TOML experiment config; defaults to the built-in golden config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV dataset, replacing the configured data source.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long)]
    pub categorical_threshold: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub attention: Option<String>,
    #[arg(long)]
    pub basis: Option<String>,
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub pretrain_epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
}

impl Overrides {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::golden(),
        };
        if let Some(p) = &self.data {
            cfg.data.path = Some(p.clone());
            cfg.data.synthetic = None;
        }
        if let Some(l) = &self.label {
            cfg.data.hints.label.clone_from(l);
        }
        if let Some(t) = self.categorical_threshold {
            cfg.data.hints.categorical_threshold = t;
        }
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value {
                    $field = v;
                }
            };
        }
        set!(cfg.seed, self.seed);
        set!(cfg.model.depth, self.depth);
        set!(cfg.model.embed_dim, self.embed_dim);
        set!(cfg.model.n_heads, self.heads);
        set!(cfg.model.order, self.order);
        set!(cfg.train.finetune_epochs, self.epochs);
        set!(cfg.train.pretrain_epochs, self.pretrain_epochs);
        set!(cfg.train.batch_size, self.batch_size);
        set!(cfg.train.lr, self.lr);
        set!(cfg.train.patience, self.patience);
        if let Some(a) = &self.attention {
            cfg.model.attention = parse_attention(a)?;
        }
        if let Some(b) = &self.basis {
            cfg.model.basis = parse_basis(b)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub overrides: Overrides,
    /// Output directory for record.json, checkpoint.json, report.csv and epochs.jsonl.
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub overrides: Overrides,
    /// order, basis or attention.
    #[arg(long)]
    pub axis: String,
    /// Comma-separated axis values, e.g. `2,3,5,10` or `power,chebyshev,jacobi(1;1)`.
    #[arg(long)]
    pub values: String,
    /// Comma-separated seed list; defaults to the config's seeds.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// CSV output; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Number of leading rows fed to the report.
    #[arg(long, default_value_t = 16)]
    pub rows: usize,
    #[arg(long, default_value_t = 41)]
    pub grid_points: usize,
    #[arg(long, default_value_t = 20)]
    pub convergence_steps: usize,
    /// JSON report path; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConvergenceArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Encoder layer, 1-based.
    #[arg(long, default_value_t = 1)]
    pub layer: usize,
    #[arg(long, default_value_t = 0)]
    pub head: usize,
    #[arg(long, default_value_t = 0)]
    pub row: usize,
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    /// PageRank teleport probability.
    #[arg(long, default_value_t = 0.15)]
    pub eps: f64,
    /// Divide δ_k by ‖AV‖_F.
    #[arg(long)]
    pub relative: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    #[arg(long, default_value_t = 6)]
    pub tokens: usize,
    #[arg(long, default_value_t = 8)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 2)]
    pub heads: usize,
    #[arg(long, default_value_t = 3)]
    pub order: usize,
    #[arg(long, default_value = "chebyshev")]
    pub basis: String,
    #[arg(long, default_value = "cheatt")]
    pub attention: String,
    #[arg(long, default_value_t = 2)]
    pub rows: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_encoded(checkpoint: &Path, data: &Path) -> Result<(Model, Encoded)> {
    let ck = Checkpoint::load(checkpoint)?;
    let schema = ck.schema.clone().ok_or_else(|| {
        Error::Format("checkpoint carries no preprocessing schema; it cannot encode CSV rows".into())
    })?;
    let model = ck.to_model()?;
    let encoded = schema.encode(&read_raw(data)?)?;
    Ok((model, encoded))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Diagnose(a) => diagnose(a),
        Command::Convergence(a) => convergence(a),
        Command::Gradcheck(a) => gradcheck(a),
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = SyntheticSpec {
        n_rows: a.rows,
        n_continuous: a.continuous,
        n_categorical: a.categorical,
        vocab: a.vocab,
        task: a.task,
        classes: a.classes,
        noise: a.noise,
    };
    let ds = generate_synthetic(&spec, a.seed)?;
    ds.save_csv(&a.out)?;
    println!("wrote {} rows to {}", ds.len(), a.out.display());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let cfg = a.overrides.resolve()?;
    let data = cfg.data.load()?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let log_path = a.out.join("epochs.jsonl");
    let mut log = std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut log_err = None;
    let result = run_experiment_with(&cfg, &data, |epoch| {
        let line = serde_json::to_string(epoch).expect("epoch log serializes");
        if let Err(e) = writeln!(log, "{line}").and_then(|_| log.flush()) {
            log_err.get_or_insert(e);
        }
    });
    if let Some(e) = log_err {
        return Err(Error::io(&log_path, e));
    }
    let exp = result?;
    let record_path = a.out.join("record.json");
    write_text(Some(&record_path), &serde_json::to_string_pretty(&exp.record)?)?;
    Checkpoint::from_model(&exp.model, Some(&exp.schema)).save(&a.out.join("checkpoint.json"))?;
    write_text(Some(&a.out.join("report.csv")), &report_csv(&exp.record.report))?;
    write_text(Some(&a.out.join("config.toml")), &cfg.to_toml_string()?)?;
    let epochs = exp.record.epochs.len();
    println!(
        "test {} = {:.4} after {epochs} epochs (best epoch {:?}); outputs in {}",
        exp.record.metric,
        exp.record.test_metric,
        exp.record.best_epoch,
        a.out.display()
    );
    Ok(())
}

fn run_sweep(a: SweepArgs) -> Result<()> {
    let mut cfg = a.overrides.resolve()?;
    if let Some(s) = &a.seeds {
        cfg.seeds = s
            .split(',')
            .map(|x| {
                x.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad seed {x:?}")))
            })
            .collect::<Result<_>>()?;
    }
    let axis = SweepAxis::parse(&a.axis, &a.values)?;
    let data = cfg.data.load()?;
    let cells = sweep(&cfg, &axis, &data, a.jobs)?;
    write_text(a.out.as_deref(), &sweep_csv(&cells))?;
    for c in cells.iter().filter(|c| !c.failures.is_empty()) {
        for (seed, e) in &c.failures {
            eprintln!("{}={} seed {seed} failed: {e}", c.axis, c.value);
        }
    }
    Ok(())
}

fn diagnose(a: DiagnoseArgs) -> Result<()> {
    let (model, encoded) = load_encoded(&a.checkpoint, &a.data)?;
    let rows: Vec<_> = encoded.rows.into_iter().take(a.rows.max(1)).collect();
    let report = layer_report(
        &model,
        &rows,
        0..model.config().depth + 1,
        &ReportOptions {
            grid_points: a.grid_points,
            convergence_steps: a.convergence_steps,
        },
    )?;
    write_text(a.out.as_deref(), &serde_json::to_string_pretty(&report)?)?;
    if let Some(p) = &a.csv {
        write_text(Some(p), &report_csv(&report))?;
    }
    Ok(())
}

fn convergence(a: ConvergenceArgs) -> Result<()> {
    let (model, encoded) = load_encoded(&a.checkpoint, &a.data)?;
    let depth = model.config().depth;
    if a.layer == 0 || a.layer > depth {
        return Err(Error::Config(format!("layer must be in 1..={depth}")));
    }
    if a.head >= model.config().n_heads {
        return Err(Error::Config(format!("head must be below {}", model.config().n_heads)));
    }
    let row = encoded
        .rows
        .get(a.row)
        .ok_or_else(|| Error::Data(format!("row {} outside {} rows", a.row, encoded.rows.len())))?;
    let act = model.activations(row)?;
    let map = &act.attention[a.layer - 1][a.head];
    let v = &act.layers[a.layer - 1];
    let mut deltas = power_convergence_curve(map, v, a.steps)?;
    if a.relative {
        let norm = map.apply(v)?.frobenius_norm();
        if norm > 0.0 {
            deltas.iter_mut().for_each(|d| *d /= norm);
        }
    }
    let pagerank = pagerank_error_curve(map.matrix(), a.eps, a.steps)?;
    let markov = verify_markov_conditions(map, a.eps);
    eprintln!(
        "stochastic={} min_entry={:e} spectral_gap={:.6}",
        markov.is_stochastic, markov.min_entry, markov.spectral_gap_estimate
    );
    let mut out = String::from("k,delta,pagerank_err\n");
    for k in 0..a.steps {
        let d = deltas.get(k).map_or(String::new(), |x| x.to_string());
        let p = pagerank.get(k).map_or(String::new(), |x| x.to_string());
        out.push_str(&format!("{},{d},{p}\n", k + 1));
    }
    write_text(a.out.as_deref(), &out)
}

fn gradcheck(a: GradcheckArgs) -> Result<()> {
    if a.tokens < 3 || a.rows == 0 {
        return Err(Error::Config("gradcheck needs at least 3 tokens and one row".into()));
    }
    let n_cat = a.tokens / 3;
    let spec = SyntheticSpec {
        n_rows: a.rows.max(3) * 4,
        n_continuous: a.tokens - n_cat,
        n_categorical: n_cat,
        ..SyntheticSpec::default()
    };
    let ds = generate_synthetic(&spec, a.seed)?;
    let cfg = ModelConfig {
        n_tokens: a.tokens,
        embed_dim: a.embed_dim,
        depth: a.depth,
        n_heads: a.heads,
        poly: PolyTemplate {
            basis: parse_basis(&a.basis)?,
            order: a.order,
        },
        attention_kind: parse_attention(&a.attention)?,
        ffn_hidden: 2 * a.embed_dim,
        seed: a.seed,
    };
    let model = Model::new(cfg, ds.column_kinds(), ds.task())?;
    let rows: Vec<_> = ds.rows.iter().take(a.rows).cloned().collect();
    let labels: Vec<f64> = ds.labels.iter().take(a.rows).copied().collect();
    let masks: Vec<Vec<bool>> = (0..rows.len())
        .map(|i| (0..a.tokens).map(|c| (c + i) % 2 == 0).collect())
        .collect();
    let report = gradient_check(&model, &rows, &labels, &masks, 1.0, a.step)?;
    for p in &report.params {
        println!("{:<28} {:>5} entries  max rel err {:.3e}", p.name, p.compared, p.max_rel_err);
    }
    println!("overall max rel err {:.3e} (tolerance {:e})", report.max_rel_err, a.tolerance);
    if report.max_rel_err > a.tolerance {
        return Err(Error::Check(format!(
            "gradient mismatch {:.3e} exceeds {:e}",
            report.max_rel_err, a.tolerance
        )));
    }
    Ok(())
}
