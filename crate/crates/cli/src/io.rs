//! File formats: CSV matrices (comma-separated, '.' decimal, optional
//! header row), JSON mask files, and plain-text name lists.

use crate::CliError;
use gsppca::evidence::SupportVector;
use nalgebra::DMatrix;
use std::fs;
use std::path::Path;

/// Reads an n x p numeric CSV. With `header` the first row is skipped.
/// Ragged rows or non-numeric fields are usage errors.
pub fn read_matrix_csv(path: &Path, header: bool) -> Result<DMatrix<f64>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(false)
        .from_path(path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record
            .map_err(|e| CliError::usage(format!("{}: row {}: {e}", path.display(), i + 1)))?;
        let row: Result<Vec<f64>, _> = record
            .iter()
            .map(|field| field.trim().parse::<f64>())
            .collect();
        let row = row.map_err(|e| {
            CliError::usage(format!("{}: row {}: non-numeric field: {e}", path.display(), i + 1))
        })?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(CliError::usage(format!(
                    "{}: row {} has {} fields, expected {}",
                    path.display(),
                    i + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::usage(format!("{}: no data rows", path.display())));
    }
    let n = rows.len();
    let p = rows[0].len();
    Ok(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
}

/// Writes a matrix as CSV with full-precision (shortest round-trip) floats.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
        writer
            .write_record(&row)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    }
    writer
        .flush()
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    Ok(())
}

/// Reads a support mask from JSON: a bare array of 0/1 (or booleans), or
/// an object carrying one under "support" or "mask".
pub fn read_mask_json(path: &Path) -> Result<SupportVector, CliError> {
    let content = fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&content)
        .map_err(|e| CliError::usage(format!("{}: invalid JSON: {e}", path.display())))?;
    let array = match &value {
        serde_json::Value::Array(a) => a,
        serde_json::Value::Object(o) => o
            .get("support")
            .or_else(|| o.get("mask"))
            .and_then(|v| v.as_array())
            .ok_or_else(|| {
                CliError::usage(format!(
                    "{}: expected an array or an object with a 'support'/'mask' array",
                    path.display()
                ))
            })?,
        _ => {
            return Err(CliError::usage(format!(
                "{}: expected an array or object",
                path.display()
            )))
        }
    };
    let mut mask = Vec::with_capacity(array.len());
    for (i, v) in array.iter().enumerate() {
        let bit = match v {
            serde_json::Value::Bool(b) => *b,
            serde_json::Value::Number(n) => match n.as_f64() {
                Some(x) if x == 0.0 => false,
                Some(x) if x == 1.0 => true,
                _ => {
                    return Err(CliError::usage(format!(
                        "{}: mask entry {i} must be 0 or 1",
                        path.display()
                    )))
                }
            },
            _ => {
                return Err(CliError::usage(format!(
                    "{}: mask entry {i} must be 0/1 or boolean",
                    path.display()
                )))
            }
        };
        mask.push(bit);
    }
    Ok(SupportVector::from_mask(mask))
}

/// Reads one variable name per line (used to map CSV columns to gene-set
/// identifiers).
pub fn read_names(path: &Path) -> Result<Vec<String>, CliError> {
    let content = fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    let names: Vec<String> = content
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect();
    if names.is_empty() {
        return Err(CliError::usage(format!("{}: no names found", path.display())));
    }
    Ok(names)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let content = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::usage(format!("serialization failed: {e}")))?;
    fs::write(path, content + "\n")
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))
}
