//! CSV dataset ingestion.
//!
//! The file must have a header row. The column named `label` holds the
//! class index; every other column is a numeric feature, kept in file
//! order. Rows are numbered from 1 starting at the first data row.

use std::fs::File;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read dataset: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("empty dataset")]
    Empty,
    #[error("missing \"label\" column")]
    MissingLabel,
    #[error("dataset has no feature columns")]
    NoFeatures,
    #[error("row {row}, column {column:?}: {value:?} is not a number")]
    NonNumeric { row: usize, column: String, value: String },
    #[error("row {row}, column {column:?}: NaN is not allowed")]
    NotANumber { row: usize, column: String },
    #[error("row {row}: label {value:?} is not a non-negative integer")]
    BadLabel { row: usize, value: String },
    #[error("row {row}: expected {expected} cells, found {found}")]
    Ragged { row: usize, expected: usize, found: usize },
    #[error("labels are not dense: class {missing} never occurs below the maximum label {max}")]
    SparseLabels { missing: usize, max: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetTable {
    /// Feature column names in file order (the label column excluded).
    pub columns: Vec<String>,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl DatasetTable {
    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<DatasetTable, DatasetError> {
    parse_dataset(File::open(path)?)
}

pub fn parse_dataset(reader: impl std::io::Read) -> Result<DatasetTable, DatasetError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv.headers()?.clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(DatasetError::Empty);
    }
    let label_col = headers.iter().position(|h| h == "label").ok_or(DatasetError::MissingLabel)?;
    let columns: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != label_col)
        .map(|(_, h)| h.to_string())
        .collect();
    if columns.is_empty() {
        return Err(DatasetError::NoFeatures);
    }

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in csv.records().enumerate() {
        let row = i + 1;
        let record = record?;
        if record.len() != headers.len() {
            return Err(DatasetError::Ragged {
                row,
                expected: headers.len(),
                found: record.len(),
            });
        }
        let mut x = Vec::with_capacity(columns.len());
        for (j, cell) in record.iter().enumerate() {
            if j == label_col {
                let label = cell.parse::<usize>().map_err(|_| DatasetError::BadLabel {
                    row,
                    value: cell.to_string(),
                })?;
                labels.push(label);
                continue;
            }
            let column = headers[j].to_string();
            let v: f64 = cell.parse().map_err(|_| DatasetError::NonNumeric {
                row,
                column: column.clone(),
                value: cell.to_string(),
            })?;
            if v.is_nan() {
                return Err(DatasetError::NotANumber { row, column });
            }
            x.push(v);
        }
        features.push(x);
    }
    if labels.is_empty() {
        return Err(DatasetError::Empty);
    }
    let max = *labels.iter().max().expect("non-empty");
    let mut seen = vec![false; max + 1];
    for &l in &labels {
        seen[l] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(DatasetError::SparseLabels { missing, max });
    }
    Ok(DatasetTable {
        columns,
        features,
        labels,
    })
}
