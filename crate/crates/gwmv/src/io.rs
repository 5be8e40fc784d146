//! CSV and JSON file formats.
//!
//! Numbers are written in Rust's shortest round-trip form, so files
//! reproduce values exactly and reruns are byte-identical.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use gwmv_core::embedding::MdsTraceRow;
use gwmv_core::matrix::Matrix;
use serde::Serialize;

use crate::error::CliError;

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(file))
}

fn fmt(x: f64) -> String {
    format!("{x:?}")
}

/// Writes a matrix, one row per line, with an optional header row.
pub fn write_matrix(path: &Path, m: &Matrix, header: Option<&[String]>) -> Result<(), CliError> {
    let mut w = writer(path)?;
    if let Some(h) = header {
        w.write_record(h).map_err(|e| csv_err(path, e))?;
    }
    for i in 0..m.rows() {
        w.write_record(m.row(i).iter().map(|&x| fmt(x)))
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Column names `prefix1, prefix2, ...`.
pub fn numbered_header(prefix: &str, count: usize) -> Vec<String> {
    (1..=count).map(|i| format!("{prefix}{i}")).collect()
}

fn parse_row(record: &csv::StringRecord) -> Option<Vec<f64>> {
    record
        .iter()
        .map(|f| f.trim().parse::<f64>().ok())
        .collect()
}

/// Reads a numeric CSV. A first row that does not parse as numbers is
/// taken as a header and skipped.
pub fn read_matrix(path: &Path) -> Result<Matrix, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        match parse_row(&rec) {
            Some(r) => rows.push(r),
            None if line == 0 => continue,
            None => {
                return Err(CliError::Data(format!(
                    "{}: non-numeric value on row {}",
                    path.display(),
                    line + 1
                )))
            }
        }
    }
    Matrix::from_rows(&rows)
        .ok_or_else(|| CliError::Data(format!("{}: rows have different lengths", path.display())))
}

/// Reads a coordinate CSV. A leading `# labels` row marks the last
/// column as integer class labels.
pub fn read_coordinates(path: &Path) -> Result<(Matrix, Option<Vec<i64>>), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let labelled = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .is_some_and(|l| {
            l.trim().trim_start_matches('#').trim() == "labels" && l.trim().starts_with('#')
        });
    let m = read_matrix(path)?;
    if !labelled {
        return Ok((m, None));
    }
    if m.cols() < 2 {
        return Err(CliError::Data(format!(
            "{}: no coordinates besides the label column",
            path.display()
        )));
    }
    let last = m.cols() - 1;
    let mut labels = Vec::with_capacity(m.rows());
    for i in 0..m.rows() {
        let v = m[(i, last)];
        if v.fract() != 0.0 || v.abs() > 2f64.powi(53) {
            return Err(CliError::Data(format!(
                "{}: label {v} on row {} is not an integer",
                path.display(),
                i + 1
            )));
        }
        labels.push(v as i64);
    }
    Ok((
        Matrix::from_fn(m.rows(), last, |i, j| m[(i, j)]),
        Some(labels),
    ))
}

/// Reads a one-column integer label file, with or without a header.
pub fn read_labels(path: &Path) -> Result<Vec<i64>, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut labels = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let field = rec.get(0).unwrap_or("");
        match field.parse::<i64>() {
            Ok(v) => labels.push(v),
            Err(_) if line == 0 => continue,
            Err(_) => {
                return Err(CliError::Data(format!(
                    "{}: label {field:?} on row {} is not an integer",
                    path.display(),
                    line + 1
                )))
            }
        }
    }
    Ok(labels)
}

pub fn write_labels(path: &Path, labels: &[i64]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(["label"]).map_err(|e| csv_err(path, e))?;
    for l in labels {
        w.write_record([l.to_string()])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_trace(path: &Path, rows: &[MdsTraceRow]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(["iter", "cost", "grad_norm", "step_size"])
        .map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record([
            r.iter.to_string(),
            fmt(r.cost),
            fmt(r.grad_norm),
            fmt(r.step_size),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_rows(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    text.push('\n');
    let mut f = File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(text.as_bytes())
        .map_err(|e| CliError::io(path, e))
}

pub fn format_number(x: f64) -> String {
    fmt(x)
}
