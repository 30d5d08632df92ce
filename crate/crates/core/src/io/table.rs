//! CSV ingestion. A header row is required, every cell must be a decimal
//! number, and nothing is imputed.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{infer_kinds, ColumnKind, Dataset, Targets};
use crate::error::{Result, VeilError};
use crate::numeric::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Regression,
}

/// Which column holds the supervision and how to read it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub target: Option<String>,
    pub task: Task,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub feature_names: Vec<String>,
    pub x: Matrix,
    pub kinds: Vec<ColumnKind>,
    pub targets: Option<Targets>,
}

impl CsvTable {
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let c = self
            .feature_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| VeilError::InvalidArgument(format!("no feature column named {name:?}")))?;
        Ok(self.x.col_values(c))
    }

    pub fn into_dataset(self) -> Result<Dataset> {
        let targets = self
            .targets
            .ok_or_else(|| VeilError::InvalidArgument("this command needs a target column".into()))?;
        let mut ds = Dataset::new(self.x, targets)?;
        ds.kinds = self.kinds;
        ds.feature_names = self.feature_names;
        Ok(ds)
    }
}

pub fn ingest_csv(path: &Path, schema: &CsvSchema) -> Result<CsvTable> {
    let f = std::fs::File::open(path).map_err(|e| VeilError::InvalidArgument(format!("{}: {e}", path.display())))?;
    read_csv(f, schema)
}

fn csv_err(row: usize, column: impl Into<String>, message: impl Into<String>) -> VeilError {
    VeilError::Csv {
        row,
        column: column.into(),
        message: message.into(),
    }
}

/// Row numbers in errors count data rows from 1; the header is row 0.
pub fn read_csv(input: impl Read, schema: &CsvSchema) -> Result<CsvTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(0, "", e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(csv_err(0, "", "missing header row"));
    }
    let target_col = match &schema.target {
        Some(t) => Some(
            header
                .iter()
                .position(|h| h == t)
                .ok_or_else(|| csv_err(0, t.clone(), "target column not found in header"))?,
        ),
        None => None,
    };
    let feature_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != target_col)
        .map(|(_, h)| h.clone())
        .collect();
    if feature_names.is_empty() {
        return Err(csv_err(0, "", "no feature columns"));
    }
    let mut data = Vec::new();
    let mut target = Vec::new();
    let mut rows = 0;
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec.map_err(|e| csv_err(row, "", e.to_string()))?;
        for (c, cell) in rec.iter().enumerate() {
            if cell.is_empty() {
                return Err(csv_err(row, header[c].clone(), "missing value"));
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| csv_err(row, header[c].clone(), format!("cannot parse {cell:?} as a number")))?;
            if !v.is_finite() {
                return Err(csv_err(row, header[c].clone(), format!("non-finite value {cell:?}")));
            }
            if Some(c) == target_col {
                target.push(v);
            } else {
                data.push(v);
            }
        }
        rows += 1;
    }
    let x = Matrix::new(rows, feature_names.len(), data)?;
    let targets = match (target_col, schema.task) {
        (None, _) => None,
        (Some(_), Task::Regression) => Some(Targets::Values(Matrix::column(&target))),
        (Some(c), Task::Classification) => {
            let mut labels = Vec::with_capacity(rows);
            for (i, &v) in target.iter().enumerate() {
                if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
                    return Err(csv_err(i + 1, header[c].clone(), format!("class label {v} is not a non-negative integer")));
                }
                labels.push(v as usize);
            }
            let n_classes = labels.iter().max().map_or(0, |m| m + 1);
            Some(Targets::Labels { labels, n_classes })
        }
    };
    let kinds = infer_kinds(&x);
    Ok(CsvTable {
        feature_names,
        x,
        kinds,
        targets,
    })
}

/// Writes a header plus rows, using the shortest representation that reads
/// back to the same f64.
pub fn write_csv(path: &Path, names: &[String], x: &Matrix, target: Option<(&str, &[f64])>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| VeilError::Format(e.to_string()))?;
    let mut head: Vec<&str> = names.iter().map(String::as_str).collect();
    if let Some((t, _)) = target {
        head.push(t);
    }
    w.write_record(&head).map_err(|e| VeilError::Format(e.to_string()))?;
    for r in 0..x.rows() {
        let mut rec: Vec<String> = x.row(r).iter().map(|v| v.to_string()).collect();
        if let Some((_, y)) = target {
            rec.push(y[r].to_string());
        }
        w.write_record(&rec).map_err(|e| VeilError::Format(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
