use std::path::{Path, PathBuf};

use cheatt_core::nn::{AttentionKind, ModelConfig, PolyTemplate};
use cheatt_core::polyfilter::{BasisKind, DEFAULT_ORDER};
use serde::{Deserialize, Serialize};

use crate::data::{load_csv, SchemaHints, TableDataset};
use crate::error::{Error, Result};
use crate::synthetic::{generate_synthetic, SyntheticSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSpec {
    pub path: Option<PathBuf>,
    pub synthetic: Option<SyntheticSpec>,
    /// Seed of the synthetic generator and of its split.
    pub synthetic_seed: u64,
    pub hints: SchemaHints,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            path: None,
            synthetic: None,
            synthetic_seed: 7,
            hints: SchemaHints::default(),
        }
    }
}

impl DataSpec {
    /// Loads `path`, or generates `synthetic` (the default spec when
    /// neither is given).
    pub fn load(&self) -> Result<TableDataset> {
        match (&self.path, &self.synthetic) {
            (Some(path), None) => load_csv(path, &self.hints),
            (None, spec) => generate_synthetic(&spec.clone().unwrap_or_default(), self.synthetic_seed),
            (Some(_), Some(_)) => Err(Error::Config(
                "data.path and data.synthetic are mutually exclusive".into(),
            )),
        }
    }
}

/// Model shape; the token count comes from the dataset and the seed from
/// the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub embed_dim: usize,
    pub depth: usize,
    pub n_heads: usize,
    pub ffn_hidden: usize,
    pub attention: AttentionKind,
    pub basis: BasisKind,
    pub order: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            embed_dim: 16,
            depth: 4,
            n_heads: 2,
            ffn_hidden: 32,
            attention: AttentionKind::CheAtt,
            basis: BasisKind::Chebyshev,
            order: DEFAULT_ORDER,
        }
    }
}

impl ModelSpec {
    pub fn model_config(&self, n_tokens: usize, seed: u64) -> ModelConfig {
        ModelConfig {
            n_tokens,
            embed_dim: self.embed_dim,
            depth: self.depth,
            n_heads: self.n_heads,
            poly: PolyTemplate {
                basis: self.basis,
                order: self.order,
            },
            attention_kind: self.attention,
            ffn_hidden: self.ffn_hidden,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSpec {
    pub pretrain_epochs: usize,
    pub finetune_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Per-cell masking probability during pretraining.
    pub mask_prob: f64,
    pub lambda_ce: f64,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            pretrain_epochs: 0,
            finetune_epochs: 200,
            batch_size: 32,
            lr: 1e-3,
            weight_decay: 0.0,
            mask_prob: 0.3,
            lambda_ce: 1.0,
            patience: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSpec {
    /// Test rows fed to the oversmoothing report.
    pub rows: usize,
    pub grid_points: usize,
    pub convergence_steps: usize,
}

impl Default for ReportSpec {
    fn default() -> Self {
        Self {
            rows: 16,
            grid_points: 41,
            convergence_steps: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seed of a single run: model init, batch order and masks.
    pub seed: u64,
    /// Seeds repeated by sweeps.
    pub seeds: Vec<u64>,
    pub data: DataSpec,
    pub model: ModelSpec,
    pub train: TrainSpec,
    pub report: ReportSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            seeds: vec![1, 2, 3, 4, 5],
            data: DataSpec::default(),
            model: ModelSpec::default(),
            train: TrainSpec::default(),
            report: ReportSpec::default(),
        }
    }
}

impl ExperimentConfig {
    /// CheAtt, depth 4, order 5, 200 fine-tune epochs on the default
    /// 500×8 synthetic binary table, seed 7.
    pub fn golden() -> Self {
        let mut cfg = Self::default();
        cfg.data.synthetic = Some(SyntheticSpec::default());
        cfg
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.train;
        if t.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be positive".into()));
        }
        if !(t.lr > 0.0 && t.lr.is_finite()) {
            return Err(Error::Config(format!("train.lr {} must be positive", t.lr)));
        }
        if !(0.0..=1.0).contains(&t.mask_prob) {
            return Err(Error::Config(format!("train.mask_prob {} outside [0, 1]", t.mask_prob)));
        }
        if !(t.lambda_ce >= 0.0) || !(t.weight_decay >= 0.0) {
            return Err(Error::Config("lambda_ce and weight_decay must be >= 0".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        self.model.model_config(1, self.seed).validate()?;
        Ok(())
    }
}

/// Parses `power`, `chebyshev`, `legendre`, `jacobi` or `jacobi(a,b)`.
pub fn parse_basis(s: &str) -> Result<BasisKind> {
    let t = s.trim().to_ascii_lowercase();
    let basis = match t.as_str() {
        "power" => BasisKind::Power,
        "chebyshev" => BasisKind::Chebyshev,
        "legendre" => BasisKind::Legendre,
        "jacobi" => BasisKind::jacobi_default(),
        _ => {
            let inner = t
                .strip_prefix("jacobi(")
                .and_then(|r| r.strip_suffix(')'))
                .ok_or_else(|| Error::Config(format!("unknown basis {s:?}")))?;
            let (a, b) = inner
                .split_once(',')
                .ok_or_else(|| Error::Config(format!("jacobi needs two parameters: {s:?}")))?;
            let num = |x: &str| {
                x.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad jacobi parameter in {s:?}")))
            };
            BasisKind::Jacobi {
                a: num(a)?,
                b: num(b)?,
            }
        }
    };
    basis.validate()?;
    Ok(basis)
}

pub fn basis_label(b: BasisKind) -> String {
    match b {
        BasisKind::Jacobi { a, b } => format!("jacobi({a},{b})"),
        other => other.name().to_string(),
    }
}

pub fn parse_attention(s: &str) -> Result<AttentionKind> {
    match s.trim().to_ascii_lowercase().as_str() {
        "vanilla" => Ok(AttentionKind::Vanilla),
        "cheatt" => Ok(AttentionKind::CheAtt),
        _ => Err(Error::Config(format!("unknown attention kind {s:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_defaults() {
        let cfg = ExperimentConfig::golden();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
        let partial = ExperimentConfig::from_toml_str(
            "seed = 3\n[model]\ndepth = 2\nbasis = { kind = \"jacobi\", a = 0.5, b = -0.5 }\n",
        )
        .unwrap();
        assert_eq!(partial.model.depth, 2);
        assert_eq!(partial.model.basis, BasisKind::Jacobi { a: 0.5, b: -0.5 });
        assert_eq!(partial.train, TrainSpec::default());
    }

    #[test]
    fn bad_values_are_config_errors() {
        for text in [
            "[train]\nbatch_size = 0\n",
            "[train]\nlr = -1.0\n",
            "[model]\nn_heads = 3\n",
            "[model]\nbogus = 1\n",
            "seeds = []\n",
        ] {
            assert!(ExperimentConfig::from_toml_str(text).is_err(), "{text}");
        }
    }

    #[test]
    fn basis_parsing() {
        assert_eq!(parse_basis("Chebyshev").unwrap(), BasisKind::Chebyshev);
        assert_eq!(parse_basis("jacobi(0.5, 2)").unwrap(), BasisKind::Jacobi { a: 0.5, b: 2.0 });
        assert!(parse_basis("jacobi(-1, 0)").is_err());
        assert!(parse_basis("fourier").is_err());
        let j = parse_basis("jacobi(0.5,2)").unwrap();
        assert_eq!(parse_basis(&basis_label(j)).unwrap(), j);
    }
}
