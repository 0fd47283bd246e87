//! Curve samples as CSV: a header row of grid points, then one curve per row.
//!
//! Values are written with Rust's shortest round-trip float formatting, so
//! write-then-read reproduces every bit.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::fda::{CurveSample, Grid};

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_value(field: &str, path: &Path, line: u64, column: usize) -> Result<f64> {
    let value: f64 = field.trim().parse().map_err(|_| {
        parse_error(path, line, format!("column {}: cannot parse {field:?} as a number", column + 1))
    })?;
    if !value.is_finite() {
        return Err(parse_error(
            path,
            line,
            format!("column {}: non-finite value {field:?}", column + 1),
        ));
    }
    Ok(value)
}

/// Reads a sample from any reader; `path` is used in diagnostics only.
pub fn read_curves_from(reader: impl Read, path: &Path) -> Result<CurveSample> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(rec) => rec.map_err(|e| csv_error(e, path))?,
        None => return Err(parse_error(path, 1, "empty file: missing grid header")),
    };
    let points = header
        .iter()
        .enumerate()
        .map(|(c, f)| parse_value(f, path, 1, c))
        .collect::<Result<Vec<_>>>()?;
    let grid = Grid::new(points).map_err(|e| parse_error(path, 1, format!("bad grid header: {e}")))?;
    let g = grid.len();
    let mut data = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| csv_error(e, path))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if rec.len() != g {
            return Err(parse_error(
                path,
                line,
                format!("expected {g} values to match the grid, found {}", rec.len()),
            ));
        }
        for (c, f) in rec.iter().enumerate() {
            data.push(parse_value(f, path, line, c)?);
        }
    }
    if data.len() < 2 * g {
        return Err(parse_error(
            path,
            1,
            format!("need at least 2 curves, found {}", data.len() / g),
        ));
    }
    CurveSample::from_row_major(grid, data)
}

fn csv_error(e: csv::Error, path: &Path) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    parse_error(path, line, e.to_string())
}

/// Reads and validates a curve CSV file.
pub fn read_curves(path: &Path) -> Result<CurveSample> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_curves_from(file, path)
}

/// Writes `sample` in the curve CSV format.
pub fn write_curves_to(sample: &CurveSample, mut out: impl Write) -> std::io::Result<()> {
    let join = |vals: &[f64]| {
        vals.iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",")
    };
    writeln!(out, "{}", join(sample.grid().points()))?;
    for curve in sample.curves() {
        writeln!(out, "{}", join(curve))?;
    }
    out.flush()
}

pub fn write_curves(sample: &CurveSample, path: &Path) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    write_curves_to(sample, std::io::BufWriter::new(file)).map_err(io_err)
}
