//! CSV reading and writing for the harness.
//!
//! Reading targets plain numeric tables (regression rows x_1..x_d, y in
//! the last column) with an optional header line. Errors carry 1-based
//! row and column positions so a bad cell in a large file is findable.

use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CsvError {
    #[error("{path}: {msg}")]
    File { path: String, msg: String },
    #[error("{path}: row {row} has {got} fields, expected {expected}")]
    RaggedRow {
        path: String,
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("{path}: row {row}, column {col}: invalid number `{value}`")]
    BadCell {
        path: String,
        row: usize,
        col: usize,
        value: String,
    },
    #[error("{path}: no data rows")]
    Empty { path: String },
}

#[derive(Debug)]
pub struct NumericTable {
    /// Row-major values.
    pub values: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

/// Reads a numeric CSV. The first line is treated as a header and
/// skipped when any of its fields fails to parse as a number; every
/// following line must be fully numeric with a constant field count.
pub fn read_numeric_csv(path: &Path) -> Result<NumericTable, CsvError> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| CsvError::File {
        path: display.clone(),
        msg: e.to_string(),
    })?;
    let mut values = Vec::new();
    let mut cols = 0usize;
    let mut rows = 0usize;
    for (idx, line) in text.lines().enumerate() {
        let row_no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if rows == 0 && cols == 0 {
            let numeric = fields.iter().all(|f| f.parse::<f64>().is_ok());
            if !numeric {
                // Header line: fixes the expected width.
                cols = fields.len();
                continue;
            }
        }
        if cols == 0 {
            cols = fields.len();
        }
        if fields.len() != cols {
            return Err(CsvError::RaggedRow {
                path: display,
                row: row_no,
                got: fields.len(),
                expected: cols,
            });
        }
        for (j, field) in fields.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| CsvError::BadCell {
                path: display.clone(),
                row: row_no,
                col: j + 1,
                value: field.to_string(),
            })?;
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(CsvError::Empty { path: display });
    }
    Ok(NumericTable { values, rows, cols })
}

/// Shortest round-trip formatting; infinities spelled `inf` / `-inf`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{x}")
    }
}

/// File-name and report label for a norm exponent: `1`, `1.5`, `inf`.
pub fn p_label(p: f64) -> String {
    if p.is_infinite() {
        "inf".to_string()
    } else {
        format!("{p}")
    }
}
