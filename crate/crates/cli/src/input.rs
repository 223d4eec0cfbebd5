//! Numeric CSV input: one row per observation, optional header.

use std::io::Read;
use std::path::Path;

use ndarray::Array2;

use crate::error::{CliError, CliResult};

pub fn read_matrix(path: &Path) -> CliResult<Array2<f64>> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Input(format!("cannot open {}: {e}", path.display())))?;
    parse_matrix(file, &path.display().to_string())
}

/// Parses comma-separated numeric rows. A first row that does not parse as
/// numbers is taken as a header. Ragged rows, non-numeric cells after the
/// header and non-finite values are errors.
pub fn parse_matrix<R: Read>(reader: R, source: &str) -> CliResult<Array2<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0usize;
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| CliError::Input(format!("{source}: {e}")))?;
        let line = record.position().map_or(i as u64 + 1, |p| p.line());
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let row = match parsed {
            Ok(row) => row,
            Err(_) if rows == 0 && width.is_none() => {
                // header
                width = Some(record.len());
                continue;
            }
            Err(_) => {
                let bad = record.iter().find(|f| f.parse::<f64>().is_err()).unwrap_or_default();
                return Err(CliError::Input(format!("{source}:{line}: non-numeric value {bad:?}")));
            }
        };
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            return Err(CliError::Input(format!("{source}:{line}: non-finite value {v}")));
        }
        match width {
            Some(w) if w != row.len() => {
                return Err(CliError::Input(format!(
                    "{source}:{line}: expected {w} columns, found {}",
                    row.len()
                )))
            }
            _ => width = Some(row.len()),
        }
        values.extend(row);
        rows += 1;
    }
    if rows == 0 {
        return Err(CliError::Input(format!("{source}: no data rows")));
    }
    let cols = width.unwrap_or(0);
    Array2::from_shape_vec((rows, cols), values).map_err(|e| CliError::Input(format!("{source}: {e}")))
}
