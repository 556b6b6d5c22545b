//! Seeded synthetic tables with a known labelling rule.
//!
//! Columns are `num0..` (standard normal) followed by `cat0..` (uniform over
//! `v0..v{vocab-1}`), then `label`. Three columns are informative: `num0`,
//! `num1` and `cat0` (or `num2` when there are no categorical columns).
//! With `e(c)` the category effect `[1.5, -1.5, 0.75, -0.75]` cycled by index,
//! the noiseless score is
//!
//! ```text
//! s = 2·num0 − 1.5·num1 + e(cat0)
//! ```
//!
//! * binary: `label = 1[s + noise·ε > 0]`
//! * multiclass with C classes: `label = argmax_c cos θ_c·s + sin θ_c·w + noise·ε_c`
//!   where `θ_c = 2πc/C` and `w = 1.5·num1 + 2·e(cat0) − num0`
//! * regression: `label = s + num0·num1 + noise·ε`
//!
//! with independent standard normal `ε`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{RawTable, SchemaHints, TableDataset, TaskHint};
use crate::error::{Error, Result};

const CATEGORY_EFFECT: [f64; 4] = [1.5, -1.5, 0.75, -0.75];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_rows: usize,
    pub n_continuous: usize,
    pub n_categorical: usize,
    pub vocab: u32,
    pub task: TaskHint,
    /// Class count for multiclass tasks.
    pub classes: usize,
    pub noise: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_rows: 500,
            n_continuous: 6,
            n_categorical: 2,
            vocab: 4,
            task: TaskHint::Binary,
            classes: 3,
            noise: 0.5,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_rows == 0 {
            return Err(Error::Data("synthetic dataset needs at least one row".into()));
        }
        if self.n_continuous < 2 || self.n_continuous + self.n_categorical < 3 {
            return Err(Error::Config(
                "synthetic spec needs num0, num1 and a third column".into(),
            ));
        }
        if self.n_categorical > 0 && self.vocab == 0 {
            return Err(Error::Config("categorical vocab must be positive".into()));
        }
        if self.task == TaskHint::Multiclass && self.classes < 2 {
            return Err(Error::Config("multiclass spec needs at least two classes".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(format!("noise {} must be finite and >= 0", self.noise)));
        }
        Ok(())
    }

    fn header(&self) -> Vec<String> {
        (0..self.n_continuous)
            .map(|i| format!("num{i}"))
            .chain((0..self.n_categorical).map(|i| format!("cat{i}")))
            .chain(std::iter::once("label".to_string()))
            .collect()
    }

    /// Hints that pin every column to its generated kind.
    pub fn hints(&self, split_seed: u64) -> SchemaHints {
        SchemaHints {
            task: Some(self.task),
            split_seed,
            categorical: (0..self.n_categorical).map(|i| format!("cat{i}")).collect(),
            continuous: (0..self.n_continuous).map(|i| format!("num{i}")).collect(),
            ..SchemaHints::default()
        }
    }
}

/// Raw cells plus the noiseless score `s` of every row.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTable {
    pub raw: RawTable,
    pub scores: Vec<f64>,
}

pub fn synthetic_table(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticTable> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(spec.n_rows);
    let mut scores = Vec::with_capacity(spec.n_rows);
    for _ in 0..spec.n_rows {
        let nums: Vec<f64> = (0..spec.n_continuous)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let cats: Vec<u32> = (0..spec.n_categorical)
            .map(|_| rng.gen_range(0..spec.vocab))
            .collect();
        let third = match cats.first() {
            Some(&c) => CATEGORY_EFFECT[c as usize % CATEGORY_EFFECT.len()],
            None => nums[2],
        };
        let s = 2.0 * nums[0] - 1.5 * nums[1] + third;
        let label = match spec.task {
            TaskHint::Binary => {
                let e: f64 = rng.sample(StandardNormal);
                u8::from(s + spec.noise * e > 0.0).to_string()
            }
            TaskHint::Multiclass => {
                let w = 1.5 * nums[1] + 2.0 * third - nums[0];
                let mut best = (0, f64::NEG_INFINITY);
                for c in 0..spec.classes {
                    let theta = std::f64::consts::TAU * c as f64 / spec.classes as f64;
                    let e: f64 = rng.sample(StandardNormal);
                    let z = theta.cos() * s + theta.sin() * w + spec.noise * e;
                    if z > best.1 {
                        best = (c, z);
                    }
                }
                best.0.to_string()
            }
            TaskHint::Regression => {
                let e: f64 = rng.sample(StandardNormal);
                (s + nums[0] * nums[1] + spec.noise * e).to_string()
            }
        };
        let mut cells: Vec<String> = nums.iter().map(f64::to_string).collect();
        cells.extend(cats.iter().map(|c| format!("v{c}")));
        cells.push(label);
        rows.push(cells);
        scores.push(s);
    }
    Ok(SyntheticTable {
        raw: RawTable::new(spec.header(), rows),
        scores,
    })
}

/// Generates, types and splits a synthetic dataset; `seed` drives both the
/// values and the split.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<TableDataset> {
    let table = synthetic_table(spec, seed)?;
    TableDataset::from_raw(table.raw, &spec.hints(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use cheatt_core::metrics::auroc;
    use cheatt_core::table::{ColumnKind, Task};

    #[test]
    fn default_spec_shape() {
        let ds = generate_synthetic(&SyntheticSpec::default(), 7).unwrap();
        assert_eq!(ds.len(), 500);
        assert_eq!(ds.task(), Task::Binary);
        let kinds = ds.column_kinds();
        assert_eq!(kinds.len(), 8);
        assert!(kinds[..6].iter().all(|k| *k == ColumnKind::Continuous));
        assert!(kinds[6..].iter().all(|k| *k == ColumnKind::Categorical { vocab: 4 }));
        assert_eq!(
            (ds.splits.train.len(), ds.splits.valid.len(), ds.splits.test.len()),
            (350, 50, 100)
        );
    }

    #[test]
    fn zero_rows_is_a_data_error() {
        let spec = SyntheticSpec {
            n_rows: 0,
            ..SyntheticSpec::default()
        };
        assert!(matches!(generate_synthetic(&spec, 1), Err(Error::Data(_))));
    }

    #[test]
    fn noiseless_rule_is_perfectly_ranked_by_the_score() {
        let spec = SyntheticSpec {
            noise: 0.0,
            ..SyntheticSpec::default()
        };
        let t = synthetic_table(&spec, 3).unwrap();
        let labels: Vec<bool> = t.raw.rows.iter().map(|r| r.last().unwrap() == "1").collect();
        assert_eq!(auroc(&t.scores, &labels).unwrap(), 1.0);
    }

    #[test]
    fn generation_is_seeded() {
        let spec = SyntheticSpec::default();
        assert_eq!(synthetic_table(&spec, 9).unwrap(), synthetic_table(&spec, 9).unwrap());
        assert_ne!(synthetic_table(&spec, 9).unwrap(), synthetic_table(&spec, 10).unwrap());
    }

    #[test]
    fn other_tasks() {
        for task in [TaskHint::Multiclass, TaskHint::Regression] {
            let spec = SyntheticSpec {
                task,
                n_rows: 120,
                ..SyntheticSpec::default()
            };
            let ds = generate_synthetic(&spec, 2).unwrap();
            match task {
                TaskHint::Multiclass => assert_eq!(ds.task(), Task::Multiclass { classes: 3 }),
                _ => assert_eq!(ds.task(), Task::Regression),
            }
        }
    }
}
