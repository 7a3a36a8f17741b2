//! File formats.
//!
//! Matrices are written as plain comma-separated rows without a header.
//! Every float is printed with 17 significant digits (`{:.16e}`), which is
//! enough for `parse(format(x)) == x`.

use std::fs;
use std::path::Path;

use serde::Serialize;

use super::CliError;
use crate::npn::DataMatrix;
use crate::spd::SymMatrix;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn matrix_to_csv(m: &SymMatrix) -> String {
    let mut out = String::new();
    for i in 0..m.dim() {
        let row: Vec<String> = m.row(i).iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Parses a headerless square matrix written by [`matrix_to_csv`].
pub fn matrix_from_csv(text: &str) -> Result<SymMatrix, CliError> {
    let mut values = Vec::new();
    let mut rows = 0;
    for (r, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        for (c, field) in line.split(',').enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                CliError::Input(format!(
                    "row {}, column {}: cannot parse {field:?}",
                    r + 1,
                    c + 1
                ))
            })?;
            values.push(v);
        }
        rows += 1;
    }
    SymMatrix::from_row_major(rows, values).map_err(|e| CliError::Input(e.to_string()))
}

/// Reads `n` rows of `d` numeric columns. Rows and columns in error messages
/// are 1-based and count data rows only.
pub fn read_data_csv(path: &Path, header: bool) -> Result<DataMatrix, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;

    let mut values = Vec::new();
    let mut d = None;
    let mut n = 0;
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths {
                expected_len, len, ..
            } => CliError::Input(format!(
                "{}: row {row} has {len} columns, expected {expected_len}",
                path.display()
            )),
            _ => CliError::Input(format!("{}: row {row}: {e}", path.display())),
        })?;
        d.get_or_insert(record.len());
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                CliError::Input(format!(
                    "{}: row {row}, column {}: cannot parse {field:?} as a number",
                    path.display(),
                    c + 1
                ))
            })?;
            if !v.is_finite() {
                return Err(CliError::Input(format!(
                    "{}: row {row}, column {}: non-finite value",
                    path.display(),
                    c + 1
                )));
            }
            values.push(v);
        }
        n += 1;
    }
    let d = d.unwrap_or(0);
    if n < 2 || d < 2 {
        return Err(CliError::Input(format!(
            "{}: need at least 2 rows and 2 columns, got {n} x {d}",
            path.display()
        )));
    }
    DataMatrix::new(n, d, values).map_err(|e| CliError::Input(e.to_string()))
}

pub fn write_data_csv(path: &Path, x: &DataMatrix) -> Result<(), CliError> {
    let mut out = String::new();
    for i in 0..x.n() {
        let row: Vec<String> = x.row(i).iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_file(path, &out)
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serializable value");
    write_file(path, &(text + "\n"))
}

/// Writes a header plus string rows through the csv writer.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let io_err = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    w.write_record(header).map_err(io_err)?;
    for row in rows {
        w.write_record(row).map_err(io_err)?;
    }
    w.flush()
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
