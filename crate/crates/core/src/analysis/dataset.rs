//! CSV dataset metadata: column names, numeric kinds and ranges, row count,
//! label classes.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read dataset {0}: {1}")]
    Io(String, String),
    #[error("dataset {0}: {1}")]
    Csv(String, String),
    #[error("dataset {0} has no header row")]
    NoHeader(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMeta {
    pub name: String,
    /// Every cell parses as a number.
    pub numeric: bool,
    pub min: f64,
    pub max: f64,
    /// Distinct values in first-appearance order, capped at
    /// [`DISTINCT_CAP`].
    pub distinct: Vec<String>,
}

pub const DISTINCT_CAP: usize = 1024;

impl ColumnMeta {
    /// Already within `[-1, 1]`, i.e. needs no scaling.
    pub fn is_scaled(&self) -> bool {
        !self.numeric || (self.min >= -1.0 && self.max <= 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub path: String,
    pub columns: Vec<ColumnMeta>,
    pub row_count: usize,
    pub sequential: bool,
}

impl DatasetMeta {
    pub fn load(path: &Path, display: &str) -> Result<DatasetMeta, DatasetError> {
        let bytes = std::fs::read(path).map_err(|e| DatasetError::Io(display.to_string(), e.to_string()))?;
        Self::from_bytes(&bytes, display)
    }

    pub fn from_bytes(bytes: &[u8], display: &str) -> Result<DatasetMeta, DatasetError> {
        let csv_err = |e: csv::Error| DatasetError::Csv(display.to_string(), e.to_string());
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
        let headers = rdr.headers().map_err(csv_err)?.clone();
        if headers.is_empty() {
            return Err(DatasetError::NoHeader(display.to_string()));
        }
        let mut columns: Vec<ColumnMeta> = headers
            .iter()
            .map(|h| ColumnMeta {
                name: h.trim().to_string(),
                numeric: true,
                min: f64::INFINITY,
                max: f64::NEG_INFINITY,
                distinct: Vec::new(),
            })
            .collect();
        let mut row_count = 0;
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            row_count += 1;
            for (col, cell) in columns.iter_mut().zip(rec.iter()) {
                let cell = cell.trim();
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => {
                        col.min = col.min.min(v);
                        col.max = col.max.max(v);
                    }
                    _ => col.numeric = false,
                }
                if col.distinct.len() < DISTINCT_CAP && !col.distinct.iter().any(|d| d == cell) {
                    col.distinct.push(cell.to_string());
                }
            }
        }
        Ok(DatasetMeta { path: display.to_string(), columns, row_count, sequential: false })
    }

    pub fn column(&self, name: &str) -> Option<&ColumnMeta> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Expands feature specs to concrete column names in dataset order.
    /// `prefix*` matches by prefix, `*` matches every column but `exclude`.
    pub fn resolve_features(&self, specs: &[String], exclude: Option<&str>) -> Result<Vec<String>, String> {
        let mut out: Vec<String> = Vec::new();
        for spec in specs {
            let matched: Vec<&str> = match spec.strip_suffix('*') {
                Some(prefix) => self
                    .columns
                    .iter()
                    .map(|c| c.name.as_str())
                    .filter(|n| n.starts_with(prefix) && Some(*n) != exclude)
                    .collect(),
                None => self.column(spec).map(|c| vec![c.name.as_str()]).unwrap_or_default(),
            };
            if matched.is_empty() {
                return Err(format!("feature `{spec}` matches no column of {}", self.path));
            }
            for m in matched {
                if !out.iter().any(|o| o == m) {
                    out.push(m.to_string());
                }
            }
        }
        Ok(out)
    }

    /// Number of classes in `label`, in first-appearance order.
    pub fn class_count(&self, label: &str) -> Option<usize> {
        self.column(label).map(|c| c.distinct.len())
    }
}
