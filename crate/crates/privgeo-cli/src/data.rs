//! Dataset ingestion: CSV and JSONL matrices with validation.
//!
//! Rows are parsed into a dense row-major matrix with consistent widths and
//! finite entries; errors carry the offending line number. Inputs are
//! expected inside the unit ball — `normalize` rescales the whole file by
//! the maximum row norm when that maximum exceeds one, otherwise any
//! over-norm row is rejected outright.

use std::path::Path;

use privgeo::error::{contract, Result};

/// Tolerance for the unit-norm admission check, matching the library's.
const NORM_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    /// Comma-separated floats; an optional header row is skipped.
    Csv,
    /// One JSON array of numbers per line.
    Jsonl,
}

/// A parsed point matrix plus its provenance.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub points: Vec<Vec<f64>>,
    pub n: usize,
    pub d: usize,
    pub source: String,
}

/// Rows paired with the source line number they came from (for reporting).
fn parse_rows(path: &Path, format: Format) -> Result<Vec<(usize, Vec<f64>)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| contract(format!("cannot read {}: {e}", path.display())))?;
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: Option<Vec<f64>> = match format {
            Format::Csv => line
                .split(',')
                .map(|field| field.trim().parse::<f64>().ok())
                .collect(),
            Format::Jsonl => serde_json::from_str::<Vec<f64>>(line).ok(),
        };
        match parsed {
            Some(row) => {
                if let Some(bad) = row.iter().find(|v| !v.is_finite()) {
                    return Err(contract(format!("line {lineno}: non-finite value {bad}")));
                }
                rows.push((lineno, row));
            }
            None => {
                // A non-numeric first row is an optional header; anywhere
                // else it is a parse error.
                if rows.is_empty() && lineno == 1 && format == Format::Csv {
                    continue;
                }
                return Err(contract(format!("line {lineno}: cannot parse row {line:?}")));
            }
        }
    }
    if let Some((_, first)) = rows.first() {
        let d = first.len();
        for (lineno, row) in &rows {
            if row.len() != d {
                return Err(contract(format!(
                    "line {lineno}: row has {} values, expected {d}",
                    row.len()
                )));
            }
        }
    }
    Ok(rows)
}

fn norm(row: &[f64]) -> f64 {
    row.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Loads an unlabeled point matrix and enforces the unit-ball contract.
pub fn load_dataset(path: &Path, format: Format, normalize: bool) -> Result<Dataset> {
    let mut rows = parse_rows(path, format)?;
    if normalize {
        let max_norm = rows.iter().map(|(_, r)| norm(r)).fold(0.0f64, f64::max);
        if max_norm > 1.0 {
            for (_, row) in &mut rows {
                for v in row.iter_mut() {
                    *v /= max_norm;
                }
            }
        }
    } else if let Some((lineno, row)) =
        rows.iter().find(|(_, r)| norm(r) > 1.0 + NORM_SLACK)
    {
        return Err(contract(format!(
            "line {lineno}: row norm {} exceeds 1; pass --normalize to rescale",
            norm(row)
        )));
    }
    let d = rows.first().map_or(0, |(_, r)| r.len());
    let points: Vec<Vec<f64>> = rows.into_iter().map(|(_, r)| r).collect();
    Ok(Dataset { n: points.len(), d, points, source: path.display().to_string() })
}

/// Loads a labeled matrix: each row is `d` features followed by a ±1 label.
pub fn load_labeled(path: &Path, format: Format) -> Result<Vec<(Vec<f64>, f64)>> {
    let rows = parse_rows(path, format)?;
    let mut samples = Vec::with_capacity(rows.len());
    for (lineno, mut row) in rows {
        if row.len() < 2 {
            return Err(contract(format!(
                "line {lineno}: labeled rows need at least one feature and a label"
            )));
        }
        let label = row.pop().expect("non-empty row");
        if label != 1.0 && label != -1.0 {
            return Err(contract(format!("line {lineno}: label must be ±1, got {label}")));
        }
        samples.push((row, label));
    }
    Ok(samples)
}

// --- tests -----------------------------------------------------------------
