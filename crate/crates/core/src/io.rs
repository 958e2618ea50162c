//! CSV ingestion.
//!
//! The header names the columns `y`, `d`, `x1..xpX` and `z1..zp` in any order.
//! Values use a decimal point and a comma separator.

use std::io::Read;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::types::{validate_sample, Sample};

pub fn read_sample_csv<T: Scalar>(path: impl AsRef<Path>) -> Result<Sample<T>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Io(format!("cannot open {}: {e}", path.display())))?;
    read_sample(file)
}

pub fn read_sample<T: Scalar, R: Read>(reader: R) -> Result<Sample<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(1, "header", e.to_string()))?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();

    let find = |name: &str| headers.iter().position(|h| h == name);
    let y_col = find("y").ok_or_else(|| csv_error(1, "y", "missing column".into()))?;
    let d_col = find("d").ok_or_else(|| csv_error(1, "d", "missing column".into()))?;
    let x_cols = numbered_columns(&headers, 'x')?;
    let z_cols = numbered_columns(&headers, 'z')?;
    if z_cols.is_empty() {
        return Err(csv_error(1, "z1", "missing column".into()));
    }

    let mut y = Vec::new();
    let mut d = Vec::new();
    let mut x = Vec::new();
    let mut z = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        // Line 1 is the header.
        let row = k + 2;
        let record = record.map_err(|e| csv_error(row, "record", e.to_string()))?;
        let cell = |col: usize| -> Result<T> {
            let name = &headers[col];
            let raw = record
                .get(col)
                .ok_or_else(|| csv_error(row, name, "missing value".into()))?;
            let v: f64 = raw
                .parse()
                .map_err(|_| csv_error(row, name, format!("non-numeric value {raw:?}")))?;
            if !v.is_finite() {
                return Err(csv_error(row, name, format!("non-finite value {raw:?}")));
            }
            Ok(T::lit(v))
        };
        y.push(cell(y_col)?);
        d.push(cell(d_col)?);
        for &c in &x_cols {
            x.push(cell(c)?);
        }
        for &c in &z_cols {
            z.push(cell(c)?);
        }
    }
    let n = y.len();
    let x = Array2::from_shape_vec((n, x_cols.len()), x)
        .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
    let z = Array2::from_shape_vec((n, z_cols.len()), z)
        .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
    validate_sample(Sample { y, d, x, z })
}

fn csv_error(row: usize, column: &str, message: String) -> Error {
    Error::Csv {
        row,
        column: column.to_string(),
        message,
    }
}

/// Indices of `prefix1, prefix2, ...`, which must be numbered contiguously from 1.
fn numbered_columns(headers: &[String], prefix: char) -> Result<Vec<usize>> {
    let mut numbered: Vec<(usize, usize)> = headers
        .iter()
        .enumerate()
        .filter_map(|(col, h)| {
            h.strip_prefix(prefix)
                .and_then(|rest| rest.parse::<usize>().ok())
                .map(|k| (k, col))
        })
        .collect();
    numbered.sort_unstable();
    for (expected, &(k, _)) in (1..).zip(&numbered) {
        if k != expected {
            return Err(csv_error(
                1,
                &format!("{prefix}{expected}"),
                "missing column".into(),
            ));
        }
    }
    Ok(numbered.into_iter().map(|(_, col)| col).collect())
}
