//! Typed in-memory tabular datasets loaded from comma-delimited text.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Cell values treated as missing. Matching is case-sensitive.
pub const MISSING_MARKERS: [&str; 3] = ["", "NA", "?"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Classification => "classification",
            Task::Regression => "regression",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "classification" => Ok(Task::Classification),
            "regression" => Ok(Task::Regression),
            other => Err(format!("unknown task `{other}` (expected classification or regression)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<Option<f64>>),
    Categorical(Vec<Option<String>>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
}

impl Column {
    pub fn numeric(name: impl Into<String>, cells: Vec<Option<f64>>) -> Self {
        Column { name: name.into(), data: ColumnData::Numeric(cells) }
    }

    pub fn categorical(name: impl Into<String>, cells: Vec<Option<String>>) -> Self {
        Column { name: name.into(), data: ColumnData::Categorical(cells) }
    }

    pub fn kind(&self) -> ColumnKind {
        match self.data {
            ColumnData::Numeric(_) => ColumnKind::Numeric,
            ColumnData::Categorical(_) => ColumnKind::Categorical,
        }
    }

    pub fn len(&self) -> usize {
        match &self.data {
            ColumnData::Numeric(c) => c.len(),
            ColumnData::Categorical(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match &self.data {
            ColumnData::Numeric(c) => c[row].is_none(),
            ColumnData::Categorical(c) => c[row].is_none(),
        }
    }

    pub fn missing_count(&self) -> usize {
        (0..self.len()).filter(|&r| self.is_missing(r)).count()
    }

    /// Distinct non-missing categorical values, sorted.
    pub fn categories(&self) -> BTreeSet<&str> {
        match &self.data {
            ColumnData::Categorical(c) => c.iter().flatten().map(String::as_str).collect(),
            ColumnData::Numeric(_) => BTreeSet::new(),
        }
    }

    fn select(&self, rows: &[usize]) -> Column {
        let data = match &self.data {
            ColumnData::Numeric(c) => ColumnData::Numeric(rows.iter().map(|&r| c[r]).collect()),
            ColumnData::Categorical(c) => {
                ColumnData::Categorical(rows.iter().map(|&r| c[r].clone()).collect())
            }
        };
        Column { name: self.name.clone(), data }
    }

    pub fn cell_text(&self, row: usize) -> String {
        match &self.data {
            ColumnData::Numeric(c) => c[row].map(|v| v.to_string()).unwrap_or_default(),
            ColumnData::Categorical(c) => c[row].clone().unwrap_or_default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed delimited text: {0}")]
    Csv(#[from] csv::Error),
    #[error("target column `{0}` not found")]
    TargetNotFound(String),
    #[error("target column `{column}` has {count} missing cell(s)")]
    TargetMissing { column: String, count: usize },
    #[error("task {task} requires a {expected} target, but column `{column}` is not")]
    TaskKindMismatch { task: Task, column: String, expected: &'static str },
    #[error("dataset has zero rows")]
    NoRows,
    #[error("column `{column}` has {found} cells, expected {expected}")]
    RaggedColumn { column: String, found: usize, expected: usize },
    #[error("numeric column `{0}` contains a non-finite value")]
    NonFinite(String),
    #[error("target index {0} out of range")]
    BadTargetIndex(usize),
    #[error("split needs at least 2 rows, dataset has {0}")]
    TooFewRowsToSplit(usize),
    #[error("split ratio must lie strictly between 0 and 1, got {0}")]
    BadRatio(f64),
}

/// A dataset with typed columns and a designated prediction target.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularDataset {
    name: String,
    columns: Vec<Column>,
    n_rows: usize,
    target_index: usize,
    task: Task,
}

impl TabularDataset {
    pub fn new(
        name: impl Into<String>,
        columns: Vec<Column>,
        target_index: usize,
        task: Task,
    ) -> Result<Self, DatasetError> {
        let n_rows = columns.first().map(Column::len).unwrap_or(0);
        if n_rows == 0 {
            return Err(DatasetError::NoRows);
        }
        for col in &columns {
            if col.len() != n_rows {
                return Err(DatasetError::RaggedColumn {
                    column: col.name.clone(),
                    found: col.len(),
                    expected: n_rows,
                });
            }
            if let ColumnData::Numeric(cells) = &col.data {
                if cells.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(DatasetError::NonFinite(col.name.clone()));
                }
            }
        }
        let target = columns.get(target_index).ok_or(DatasetError::BadTargetIndex(target_index))?;
        let missing = target.missing_count();
        if missing > 0 {
            return Err(DatasetError::TargetMissing { column: target.name.clone(), count: missing });
        }
        let expected = match task {
            Task::Classification => ColumnKind::Categorical,
            Task::Regression => ColumnKind::Numeric,
        };
        if target.kind() != expected {
            return Err(DatasetError::TaskKindMismatch {
                task,
                column: target.name.clone(),
                expected: if task == Task::Regression { "numeric" } else { "categorical" },
            });
        }
        Ok(TabularDataset { name: name.into(), columns, n_rows, target_index, task })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn target_index(&self) -> usize {
        self.target_index
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn target(&self) -> &Column {
        &self.columns[self.target_index]
    }

    /// Every column except the target, in file order.
    pub fn features(&self) -> impl Iterator<Item = &Column> {
        let t = self.target_index;
        self.columns.iter().enumerate().filter(move |(i, _)| *i != t).map(|(_, c)| c)
    }

    /// New dataset made of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<TabularDataset, DatasetError> {
        let columns = self.columns.iter().map(|c| c.select(rows)).collect();
        TabularDataset::new(self.name.clone(), columns, self.target_index, self.task)
    }

    /// Writes the dataset as comma-delimited text with a header row. Missing
    /// cells are written as empty fields.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))?;
        for row in 0..self.n_rows {
            w.write_record(self.columns.iter().map(|c| c.cell_text(row)))?;
        }
        w.flush().map_err(|source| DatasetError::Io { path: "<writer>".into(), source })?;
        Ok(())
    }
}

fn is_missing_marker(cell: &str) -> bool {
    MISSING_MARKERS.contains(&cell)
}

fn parse_finite(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Builds a column from raw text cells. The column is numeric iff every
/// non-missing cell parses as a finite real number.
fn infer_column(name: String, raw: Vec<String>) -> Column {
    let numeric = raw.iter().filter(|c| !is_missing_marker(c)).all(|c| parse_finite(c).is_some());
    if numeric {
        let cells = raw
            .iter()
            .map(|c| if is_missing_marker(c) { None } else { parse_finite(c) })
            .collect();
        Column::numeric(name, cells)
    } else {
        categorical_column(name, raw)
    }
}

fn categorical_column(name: String, raw: Vec<String>) -> Column {
    let cells = raw.into_iter().map(|c| (!is_missing_marker(&c)).then_some(c)).collect();
    Column::categorical(name, cells)
}

/// Reads delimited text with a header row from `reader`.
///
/// Under classification a target column whose labels all look numeric is
/// kept as categorical labels rather than rejected.
pub fn read_dataset<R: Read>(
    reader: R,
    name: &str,
    target: &str,
    task: Task,
) -> Result<TabularDataset, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let target_index = headers
        .iter()
        .position(|h| h == target)
        .ok_or_else(|| DatasetError::TargetNotFound(target.to_owned()))?;

    let mut raw: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
    for record in rdr.records() {
        let record = record?;
        for (col, cell) in raw.iter_mut().zip(record.iter()) {
            col.push(cell.to_owned());
        }
    }
    if raw.first().is_none_or(Vec::is_empty) {
        return Err(DatasetError::NoRows);
    }

    let columns: Vec<Column> = headers
        .into_iter()
        .zip(raw)
        .enumerate()
        .map(|(i, (h, cells))| {
            if i == target_index && task == Task::Classification {
                categorical_column(h, cells)
            } else {
                infer_column(h, cells)
            }
        })
        .collect();
    TabularDataset::new(name, columns, target_index, task)
}

/// Loads a comma-delimited file with a header row.
pub fn load_dataset(path: &Path, target: &str, task: Task) -> Result<TabularDataset, DatasetError> {
    let file = std::fs::File::open(path)
        .map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    read_dataset(std::io::BufReader::new(file), &name, target, task)
}

/// Deterministic shuffled partition into (train, test).
///
/// The train part holds `floor(ratio * n_rows)` rows clamped to
/// `[1, n_rows - 1]`. Rows keep their original relative order inside each part.
pub fn split_train_test(
    d: &TabularDataset,
    ratio: f64,
    seed: u64,
) -> Result<(TabularDataset, TabularDataset), DatasetError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DatasetError::BadRatio(ratio));
    }
    let n = d.n_rows();
    if n < 2 {
        return Err(DatasetError::TooFewRowsToSplit(n));
    }
    let n_train = ((ratio * n as f64).floor() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train, test) = order.split_at_mut(n_train);
    train.sort_unstable();
    test.sort_unstable();
    Ok((d.select_rows(train)?, d.select_rows(test)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load_str(text: &str, target: &str, task: Task) -> Result<TabularDataset, DatasetError> {
        read_dataset(text.as_bytes(), "t", target, task)
    }

    #[test]
    fn loads_small_file_and_infers_kinds() {
        let d = load_str("a,b,y\n1,red,0.5\n2,blue,1.5\n3,red,2.5\n4,green,3\n", "y", Task::Regression)
            .unwrap();
        assert_eq!(d.n_rows(), 4);
        assert_eq!(d.columns().len(), 3);
        assert_eq!(d.columns()[0].kind(), ColumnKind::Numeric);
        assert_eq!(d.columns()[1].kind(), ColumnKind::Categorical);
        assert_eq!(d.target().kind(), ColumnKind::Numeric);
    }

    #[test]
    fn one_bad_cell_makes_column_categorical() {
        let d = load_str("c,y\n1.5,a\n2,b\nx,a\n", "y", Task::Classification).unwrap();
        assert_eq!(d.columns()[0].kind(), ColumnKind::Categorical);
    }

    #[test]
    fn missing_markers_become_absent() {
        let d = load_str("a,b,y\n,NA,a\n?,x,b\n1,y,a\n", "y", Task::Classification).unwrap();
        assert_eq!(d.columns()[0].missing_count(), 2);
        assert_eq!(d.columns()[0].kind(), ColumnKind::Numeric);
        assert_eq!(d.columns()[1].missing_count(), 1);
        // markers are case-sensitive
        let d = load_str("a,y\nna,a\n1,b\n", "y", Task::Classification).unwrap();
        assert_eq!(d.columns()[0].kind(), ColumnKind::Categorical);
    }

    #[test]
    fn missing_target_cell_is_an_error() {
        let err = load_str("a,y\n1,\n2,b\n", "y", Task::Classification).unwrap_err();
        assert!(matches!(err, DatasetError::TargetMissing { count: 1, .. }));
    }

    #[test]
    fn load_errors() {
        assert!(matches!(
            load_str("a,y\n1,2\n", "z", Task::Regression),
            Err(DatasetError::TargetNotFound(_))
        ));
        assert!(matches!(load_str("a,y\n", "y", Task::Regression), Err(DatasetError::NoRows)));
        assert!(matches!(
            load_str("a,y\n1,cat\n2,dog\n", "y", Task::Regression),
            Err(DatasetError::TaskKindMismatch { .. })
        ));
        assert!(matches!(
            load_dataset(Path::new("/nonexistent/file.csv"), "y", Task::Regression),
            Err(DatasetError::Io { .. })
        ));
    }

    #[test]
    fn numeric_labels_are_categorical_under_classification() {
        let d = load_str("a,y\n1,0\n2,1\n3,1\n", "y", Task::Classification).unwrap();
        assert_eq!(d.target().kind(), ColumnKind::Categorical);
        assert_eq!(d.target().categories().len(), 2);
    }

    fn ten_rows() -> TabularDataset {
        let x: Vec<Option<f64>> = (0..10).map(|i| Some(i as f64)).collect();
        TabularDataset::new("ten", vec![Column::numeric("x", x.clone()), Column::numeric("y", x)], 1, Task::Regression)
            .unwrap()
    }

    #[test]
    fn split_sizes_and_determinism() {
        let d = ten_rows();
        let (a, b) = split_train_test(&d, 0.8, 7).unwrap();
        assert_eq!((a.n_rows(), b.n_rows()), (8, 2));
        let (a2, b2) = split_train_test(&d, 0.8, 7).unwrap();
        assert_eq!(a, a2);
        assert_eq!(b, b2);

        let two = d.select_rows(&[0, 1]).unwrap();
        let (a, b) = split_train_test(&two, 0.99, 1).unwrap();
        assert_eq!((a.n_rows(), b.n_rows()), (1, 1));
    }

    #[test]
    fn split_errors() {
        let d = ten_rows();
        assert!(matches!(split_train_test(&d, 0.0, 1), Err(DatasetError::BadRatio(_))));
        assert!(matches!(split_train_test(&d, 1.0, 1), Err(DatasetError::BadRatio(_))));
        let one = d.select_rows(&[3]).unwrap();
        assert!(matches!(split_train_test(&one, 0.5, 1), Err(DatasetError::TooFewRowsToSplit(1))));
    }
}
