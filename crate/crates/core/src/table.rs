//! Column schema and row values shared by the encoder and the data layer.

use alloc::vec::Vec;

/// Kind of a table column as seen by the embedding layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum ColumnKind {
    Continuous,
    /// `vocab` real categories; indices `vocab..vocab + 3` are reserved.
    Categorical { vocab: u32 },
}

impl ColumnKind {
    /// Rows in this column's embedding table (vocabulary plus reserved slots).
    pub fn table_rows(&self) -> usize {
        match *self {
            ColumnKind::Continuous => 0,
            ColumnKind::Categorical { vocab } => vocab as usize + RESERVED_TOKENS as usize,
        }
    }
}

/// Reserved categorical slots following the real vocabulary.
pub const RESERVED_TOKENS: u32 = 3;

/// Reserved slot offsets relative to the vocabulary size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reserved {
    Unk = 0,
    Missing = 1,
    Mask = 2,
}

impl Reserved {
    pub fn index(self, vocab: u32) -> u32 {
        vocab + self as u32
    }
}

/// One cell, already encoded for the model: standardized continuous value
/// or a categorical index.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum FeatureValue {
    Continuous(f64),
    Categorical(u32),
}

/// A model-ready row: one value per token column.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub values: Vec<FeatureValue>,
}

impl TableRow {
    pub fn new(values: Vec<FeatureValue>) -> Self {
        Self { values }
    }
}

/// Prediction task attached to a table's label column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "type", rename_all = "snake_case"))]
pub enum Task {
    Binary,
    Multiclass { classes: u32 },
    Regression,
}

impl Task {
    /// Width of the prediction head's output.
    pub fn output_dim(&self) -> usize {
        match *self {
            Task::Binary => 2,
            Task::Multiclass { classes } => classes as usize,
            Task::Regression => 1,
        }
    }

    pub fn is_classification(&self) -> bool {
        !matches!(self, Task::Regression)
    }
}
