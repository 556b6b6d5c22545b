//! CSV ingestion, column typing, standardization and splits.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use cheatt_core::table::{ColumnKind, FeatureValue, Reserved, TableRow, Task};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_CATEGORICAL_THRESHOLD: usize = 20;
pub const SPLIT_COLUMN: &str = "split";

const MISSING_MARKERS: [&str; 7] = ["", "NA", "N/A", "NaN", "nan", "?", "null"];

fn is_missing(cell: &str) -> bool {
    MISSING_MARKERS.contains(&cell)
}

fn parse_num(cell: &str) -> Option<f64> {
    cell.parse::<f64>().ok().filter(|x| x.is_finite())
}

/// Numeric order when every value parses, lexicographic otherwise.
fn sort_values(values: &mut [String]) {
    if values.iter().all(|v| parse_num(v).is_some()) {
        values.sort_by(|a, b| {
            parse_num(a)
                .partial_cmp(&parse_num(b))
                .unwrap_or(Ordering::Equal)
        });
    } else {
        values.sort();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskHint {
    Binary,
    Multiclass,
    Regression,
}

/// Overrides for column typing and splitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemaHints {
    pub label: String,
    pub task: Option<TaskHint>,
    /// Numeric columns with at most this many distinct train values are
    /// treated as categorical.
    pub categorical_threshold: usize,
    pub split_column: String,
    pub split_seed: u64,
    pub train_fraction: f64,
    pub valid_fraction: f64,
    pub categorical: Vec<String>,
    pub continuous: Vec<String>,
}

impl Default for SchemaHints {
    fn default() -> Self {
        Self {
            label: "label".into(),
            task: None,
            categorical_threshold: DEFAULT_CATEGORICAL_THRESHOLD,
            split_column: SPLIT_COLUMN.into(),
            split_seed: 0,
            train_fraction: 0.7,
            valid_fraction: 0.1,
            categorical: Vec::new(),
            continuous: Vec::new(),
        }
    }
}

/// Header plus string cells, as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Source line of each row, for error messages.
    pub lines: Vec<u64>,
}

impl RawTable {
    pub fn new(header: Vec<String>, rows: Vec<Vec<String>>) -> Self {
        let lines = (0..rows.len() as u64).map(|i| i + 2).collect();
        Self {
            header,
            rows,
            lines,
        }
    }

    fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

pub fn read_raw(path: &Path) -> Result<RawTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_raw_from(file)
}

pub fn read_raw_from<R: std::io::Read>(input: R) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut records = reader.records();
    let header: Vec<String> = match records.next() {
        None => return Err(Error::Data("line 1: empty file, expected a header".into())),
        Some(r) => r
            .map_err(|e| Error::Data(format!("line 1: {e}")))?
            .iter()
            .map(str::to_owned)
            .collect(),
    };
    let mut seen = BTreeSet::new();
    for h in &header {
        if !seen.insert(h.as_str()) {
            return Err(Error::Data(format!("line 1: duplicate column name {h:?}")));
        }
    }
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for record in records {
        let record = record.map_err(|e| Error::Data(format!("csv: {e}")))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        if record.len() != header.len() {
            return Err(Error::Data(format!(
                "line {line}: {} fields, header has {}",
                record.len(),
                header.len()
            )));
        }
        rows.push(record.iter().map(str::to_owned).collect());
        lines.push(line);
    }
    if rows.is_empty() {
        return Err(Error::Data("line 2: dataset has a header but no rows".into()));
    }
    Ok(RawTable {
        header,
        rows,
        lines,
    })
}

pub fn write_raw(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(header).map_err(|e| csv_io(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Some(Split::Train),
            "valid" | "validation" | "val" => Some(Split::Valid),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// Disjoint, ascending row index sets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Splits {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    pub fn get(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    /// Seeded shuffle into train/valid/test by rounded fractions.
    pub fn shuffled(n: usize, train: f64, valid: f64, seed: u64) -> Result<Self> {
        if !(train > 0.0 && valid >= 0.0 && train + valid <= 1.0) {
            return Err(Error::Config(format!(
                "split fractions train={train}, valid={valid} are not a partition"
            )));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = ((n as f64 * train).round() as usize).clamp(1, n);
        let n_valid = ((n as f64 * valid).round() as usize).min(n - n_train);
        let mut s = Splits {
            train: idx[..n_train].to_vec(),
            valid: idx[n_train..n_train + n_valid].to_vec(),
            test: idx[n_train + n_valid..].to_vec(),
        };
        s.train.sort_unstable();
        s.valid.sort_unstable();
        s.test.sort_unstable();
        Ok(s)
    }

    fn split_of(&self, n: usize) -> Vec<Split> {
        let mut out = vec![Split::Train; n];
        for &i in &self.valid {
            out[i] = Split::Valid;
        }
        for &i in &self.test {
            out[i] = Split::Test;
        }
        out
    }
}

/// Typing and scaling of one feature column, fitted on the train split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    /// Category strings in index order (categorical only).
    pub categories: Vec<String>,
    pub mean: f64,
    pub std: f64,
    /// Zero train variance: centred but not scaled.
    pub constant: bool,
}

impl ColumnSchema {
    fn encode(&self, cell: &str, line: u64) -> Result<FeatureValue> {
        match self.kind {
            ColumnKind::Categorical { vocab } => {
                let idx = if is_missing(cell) {
                    Reserved::Missing.index(vocab)
                } else {
                    self.categories
                        .iter()
                        .position(|c| c == cell)
                        .map_or(Reserved::Unk.index(vocab), |i| i as u32)
                };
                Ok(FeatureValue::Categorical(idx))
            }
            ColumnKind::Continuous => {
                if is_missing(cell) {
                    return Ok(FeatureValue::Continuous(0.0));
                }
                let x = parse_num(cell).ok_or_else(|| {
                    Error::Data(format!(
                        "line {line}: column {:?} expects a number, found {cell:?}",
                        self.name
                    ))
                })?;
                Ok(FeatureValue::Continuous((x - self.mean) / self.std))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSchema {
    pub name: String,
    pub task: Task,
    /// Class strings in index order (classification only).
    pub classes: Vec<String>,
    /// Train-split target scaling (regression only).
    pub mean: f64,
    pub std: f64,
}

impl LabelSchema {
    fn encode(&self, cell: &str, line: u64) -> Result<f64> {
        if is_missing(cell) {
            return Err(Error::Data(format!("line {line}: missing label")));
        }
        if self.task.is_classification() {
            self.classes
                .iter()
                .position(|c| c == cell)
                .map(|i| i as f64)
                .ok_or_else(|| Error::Data(format!("line {line}: unknown class {cell:?}")))
        } else {
            parse_num(cell)
                .map(|y| (y - self.mean) / self.std)
                .ok_or_else(|| {
                    Error::Data(format!("line {line}: regression label {cell:?} is not a number"))
                })
        }
    }
}

/// Everything needed to encode new rows the way the training data was.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<ColumnSchema>,
    pub label: LabelSchema,
}

/// Encoded rows of a raw table; labels are absent when the label column is.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub rows: Vec<TableRow>,
    pub labels: Option<Vec<f64>>,
}

impl Schema {
    pub fn column_kinds(&self) -> Vec<ColumnKind> {
        self.columns.iter().map(|c| c.kind).collect()
    }

    pub fn encode(&self, raw: &RawTable) -> Result<Encoded> {
        let positions = self
            .columns
            .iter()
            .map(|c| {
                raw.column(&c.name)
                    .ok_or_else(|| Error::Data(format!("line 1: missing column {:?}", c.name)))
            })
            .collect::<Result<Vec<_>>>()?;
        let label_pos = raw.column(&self.label.name);
        let mut rows = Vec::with_capacity(raw.rows.len());
        let mut labels = Vec::with_capacity(raw.rows.len());
        for (cells, &line) in raw.rows.iter().zip(&raw.lines) {
            let values = self
                .columns
                .iter()
                .zip(&positions)
                .map(|(c, &p)| c.encode(&cells[p], line))
                .collect::<Result<Vec<_>>>()?;
            rows.push(TableRow::new(values));
            if let Some(p) = label_pos {
                labels.push(self.label.encode(&cells[p], line)?);
            }
        }
        Ok(Encoded {
            rows,
            labels: label_pos.map(|_| labels),
        })
    }

    /// Undoes target scaling for regression outputs.
    pub fn decode_target(&self, y: f64) -> f64 {
        y * self.label.std + self.label.mean
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableDataset {
    pub schema: Schema,
    /// Original header without the split column.
    pub header: Vec<String>,
    /// Original cells, aligned with `header`.
    pub cells: Vec<Vec<String>>,
    pub rows: Vec<TableRow>,
    pub labels: Vec<f64>,
    pub splits: Splits,
}

impl TableDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn task(&self) -> Task {
        self.schema.label.task
    }

    pub fn column_kinds(&self) -> Vec<ColumnKind> {
        self.schema.column_kinds()
    }

    pub fn split(&self, split: Split) -> (Vec<TableRow>, Vec<f64>) {
        self.splits
            .get(split)
            .iter()
            .map(|&i| (self.rows[i].clone(), self.labels[i]))
            .unzip()
    }

    pub fn from_raw(mut raw: RawTable, hints: &SchemaHints) -> Result<Self> {
        let n = raw.rows.len();
        if n == 0 {
            return Err(Error::Data("line 2: dataset has no rows".into()));
        }
        let splits = match raw.column(&hints.split_column) {
            Some(p) => {
                let mut s = Splits::default();
                for (i, (cells, line)) in raw.rows.iter().zip(&raw.lines).enumerate() {
                    match Split::parse(&cells[p]) {
                        Some(Split::Train) => s.train.push(i),
                        Some(Split::Valid) => s.valid.push(i),
                        Some(Split::Test) => s.test.push(i),
                        None => {
                            return Err(Error::Data(format!(
                                "line {line}: split must be train, valid or test, found {:?}",
                                cells[p]
                            )))
                        }
                    }
                }
                raw.header.remove(p);
                for cells in &mut raw.rows {
                    cells.remove(p);
                }
                s
            }
            None => Splits::shuffled(n, hints.train_fraction, hints.valid_fraction, hints.split_seed)?,
        };
        if splits.train.is_empty() {
            return Err(Error::Data("train split is empty".into()));
        }
        let label_pos = raw.column(&hints.label).ok_or_else(|| {
            Error::Data(format!("line 1: no label column named {:?}", hints.label))
        })?;

        let mut columns = Vec::new();
        for (p, name) in raw.header.iter().enumerate() {
            if p == label_pos {
                continue;
            }
            columns.push(fit_column(&raw, p, name, &splits.train, hints)?);
        }
        if columns.is_empty() {
            return Err(Error::Data("line 1: no feature columns besides the label".into()));
        }
        let label = fit_label(&raw, label_pos, &splits.train, hints)?;
        let schema = Schema { columns, label };
        let encoded = schema.encode(&raw)?;
        Ok(Self {
            schema,
            header: raw.header,
            cells: raw.rows,
            rows: encoded.rows,
            labels: encoded.labels.expect("label column present"),
            splits,
        })
    }

    /// Writes the original cells plus a split column, so that loading the
    /// file again reproduces this dataset.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut header = self.header.clone();
        header.push(SPLIT_COLUMN.into());
        let split_of = self.splits.split_of(self.cells.len());
        let rows: Vec<Vec<String>> = self
            .cells
            .iter()
            .zip(split_of)
            .map(|(cells, s)| {
                let mut r = cells.clone();
                r.push(s.name().into());
                r
            })
            .collect();
        write_raw(path, &header, &rows)
    }
}

pub fn load_csv(path: &Path, hints: &SchemaHints) -> Result<TableDataset> {
    TableDataset::from_raw(read_raw(path)?, hints)
}

fn fit_column(
    raw: &RawTable,
    p: usize,
    name: &str,
    train: &[usize],
    hints: &SchemaHints,
) -> Result<ColumnSchema> {
    let forced_cat = hints.categorical.iter().any(|c| c == name);
    let forced_cont = hints.continuous.iter().any(|c| c == name);
    if forced_cat && forced_cont {
        return Err(Error::Config(format!("column {name:?} forced both categorical and continuous")));
    }
    let mut numeric = true;
    for (cells, line) in raw.rows.iter().zip(&raw.lines) {
        let cell = &cells[p];
        if !is_missing(cell) && parse_num(cell).is_none() {
            if forced_cont {
                return Err(Error::Data(format!(
                    "line {line}: column {name:?} expects a number, found {cell:?}"
                )));
            }
            numeric = false;
            break;
        }
    }
    let train_values: Vec<&str> = train
        .iter()
        .map(|&i| raw.rows[i][p].as_str())
        .filter(|c| !is_missing(c))
        .collect();
    let distinct: BTreeSet<&str> = train_values.iter().copied().collect();
    let categorical = forced_cat
        || !numeric
        || (!forced_cont && distinct.len() <= hints.categorical_threshold);

    if categorical {
        let mut categories: Vec<String> = distinct.into_iter().map(str::to_owned).collect();
        sort_values(&mut categories);
        return Ok(ColumnSchema {
            name: name.into(),
            kind: ColumnKind::Categorical {
                vocab: categories.len() as u32,
            },
            categories,
            mean: 0.0,
            std: 1.0,
            constant: false,
        });
    }
    let xs: Vec<f64> = train_values.iter().filter_map(|c| parse_num(c)).collect();
    let (mean, var) = mean_var(&xs);
    let sd = var.sqrt();
    let constant = !(sd > 1e-12 * mean.abs().max(1.0));
    Ok(ColumnSchema {
        name: name.into(),
        kind: ColumnKind::Continuous,
        categories: Vec::new(),
        mean,
        std: if constant { 1.0 } else { sd },
        constant,
    })
}

/// Population mean and variance; `(0, 0)` for no values.
pub(crate) fn mean_var(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

fn fit_label(raw: &RawTable, p: usize, train: &[usize], hints: &SchemaHints) -> Result<LabelSchema> {
    let name = raw.header[p].clone();
    for (cells, line) in raw.rows.iter().zip(&raw.lines) {
        if is_missing(&cells[p]) {
            return Err(Error::Data(format!("line {line}: missing label")));
        }
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for cells in &raw.rows {
        *counts.entry(cells[p].as_str()).or_default() += 1;
    }
    let numeric = counts.keys().all(|c| parse_num(c).is_some());
    let integral = numeric && counts.keys().all(|c| parse_num(c).is_some_and(|x| x.fract() == 0.0));
    let task_hint = hints.task.unwrap_or(if !numeric || counts.len() <= 2 {
        if counts.len() <= 2 {
            TaskHint::Binary
        } else {
            TaskHint::Multiclass
        }
    } else if integral && counts.len() <= hints.categorical_threshold {
        TaskHint::Multiclass
    } else {
        TaskHint::Regression
    });

    if task_hint == TaskHint::Regression {
        if !numeric {
            let line = raw
                .rows
                .iter()
                .zip(&raw.lines)
                .find(|(c, _)| parse_num(&c[p]).is_none())
                .map_or(0, |(_, l)| *l);
            return Err(Error::Data(format!("line {line}: regression label is not a number")));
        }
        let ys: Vec<f64> = train.iter().filter_map(|&i| parse_num(&raw.rows[i][p])).collect();
        let (mean, var) = mean_var(&ys);
        let sd = var.sqrt();
        return Ok(LabelSchema {
            name,
            task: Task::Regression,
            classes: Vec::new(),
            mean,
            std: if sd > 0.0 { sd } else { 1.0 },
        });
    }

    let mut classes: Vec<String> = counts.keys().map(|c| (*c).to_owned()).collect();
    sort_values(&mut classes);
    let task = match task_hint {
        TaskHint::Binary => {
            if classes.len() != 2 {
                return Err(Error::Data(format!(
                    "binary label {name:?} has {} distinct values",
                    classes.len()
                )));
            }
            Task::Binary
        }
        _ => {
            if classes.len() < 2 {
                return Err(Error::Data(format!("label {name:?} has a single class")));
            }
            Task::Multiclass {
                classes: classes.len() as u32,
            }
        }
    };
    Ok(LabelSchema {
        name,
        task,
        classes,
        mean: 0.0,
        std: 1.0,
    })
}
