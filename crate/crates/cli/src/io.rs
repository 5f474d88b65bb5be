//! CSV ingestion with line-numbered validation, and CSV/JSON writers.

use crate::error::{CliError, CliResult};
use clap::ValueEnum;
use darkspin::DecayCurve;
use serde::Serialize;
use std::path::Path;

/// Numeric CSV body with the file line of every row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub header_line: u64,
    pub rows: Vec<Vec<f64>>,
    pub lines: Vec<u64>,
}

fn input(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {msg}", path.display()))
}

/// Reads a headed numeric CSV. `#` lines are skipped; every cell must be a finite number.
pub fn read_table(path: &Path) -> CliResult<Table> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_path(path).map_err(|e| input(path, e))?;
    let header_rec = rdr.headers().map_err(|e| input(path, e))?.clone();
    if header_rec.is_empty() || header_rec.iter().all(str::is_empty) {
        return Err(input(path, "empty file"));
    }
    let header_line = header_rec.position().map_or(1, |p| p.line());
    let header: Vec<String> = header_rec.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| input(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut row = Vec::with_capacity(rec.len());
        for (cell, name) in rec.iter().zip(&header) {
            let v: f64 = cell.parse().map_err(|_| input(path, format!("line {line}, column {name}: '{cell}' is not a number")))?;
            if !v.is_finite() {
                return Err(input(path, format!("line {line}, column {name}: non-finite value '{cell}'")));
            }
            row.push(v);
        }
        rows.push(row);
        lines.push(line);
    }
    if rows.is_empty() {
        return Err(input(path, "no data rows"));
    }
    Ok(Table { header, header_line, rows, lines })
}

impl Table {
    fn header_error(&self, path: &Path, expected: &str) -> CliError {
        input(path, format!("line {}: expected header {expected}, found '{}'", self.header_line, self.header.join(",")))
    }

    fn column(&self, k: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[k]).collect()
    }

    /// Strictly increasing first column, reporting the offending line.
    fn check_increasing(&self, path: &Path, name: &str) -> CliResult<()> {
        for i in 1..self.rows.len() {
            let (a, b) = (self.rows[i - 1][0], self.rows[i][0]);
            if b == a {
                return Err(input(path, format!("line {}: duplicate {name} {b}", self.lines[i])));
            }
            if b < a {
                return Err(input(path, format!("line {}: {name} {b} is not increasing (previous {a})", self.lines[i])));
            }
        }
        Ok(())
    }

    fn check_positive(&self, path: &Path, k: usize) -> CliResult<()> {
        match self.rows.iter().position(|r| r[k] <= 0.0) {
            Some(i) => Err(input(path, format!("line {}, column {}: must be > 0", self.lines[i], self.header[k]))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    Us,
    Ns,
}

impl TimeUnit {
    fn column(self) -> &'static str {
        match self {
            TimeUnit::Us => "t_us",
            TimeUnit::Ns => "t_ns",
        }
    }

    fn to_us(self, t: f64) -> f64 {
        match self {
            TimeUnit::Us => t,
            TimeUnit::Ns => darkspin::physics::units::ns_to_us(t),
        }
    }
}

const CURVE_HEADER: &str = "t_us,signal[,sigma] (or t_ns for nanoseconds)";

/// Reads a decay curve. The time unit comes from the header; a declared unit
/// that disagrees with it is rejected. Times are returned in µs.
pub fn read_curve(path: &Path, declared: Option<TimeUnit>) -> CliResult<(DecayCurve, TimeUnit)> {
    let t = read_table(path)?;
    let h: Vec<&str> = t.header.iter().map(String::as_str).collect();
    let unit = match h.first() {
        Some(&"t_us") => TimeUnit::Us,
        Some(&"t_ns") => TimeUnit::Ns,
        _ => return Err(t.header_error(path, CURVE_HEADER)),
    };
    let ok_value = matches!(h.get(1), Some(&"signal") | Some(&"F"));
    let ok_err = match h.get(2) {
        None => true,
        Some(&"sigma") | Some(&"stderr") => true,
        Some(_) => false,
    };
    if !(ok_value && ok_err && h.len() <= 3) {
        return Err(t.header_error(path, CURVE_HEADER));
    }
    if let Some(d) = declared {
        if d != unit {
            return Err(input(path, format!("unit mismatch: declared time unit {} but header column is {}", d.column(), unit.column())));
        }
    }
    t.check_increasing(path, "time")?;
    let has_err = h.len() == 3;
    if has_err {
        t.check_positive(path, 2)?;
    }
    let times = t.column(0).into_iter().map(|v| unit.to_us(v)).collect();
    let curve = DecayCurve::new(times, t.column(1), has_err.then(|| t.column(2)))?;
    Ok((curve, unit))
}

/// Reads a two-column x,y table with a fixed header and strictly increasing x.
pub fn read_xy(path: &Path, x: &str, y: &str) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let t = read_table(path)?;
    if t.header.len() != 2 || t.header[0] != x || t.header[1] != y {
        return Err(t.header_error(path, &format!("{x},{y}")));
    }
    t.check_increasing(path, x)?;
    Ok((t.column(0), t.column(1)))
}

/// Shortest round-trip text of a float; exponent form outside [1e-4, 1e15).
pub fn num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let fail = |e: csv::Error| CliError::Numerical(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(fail)?;
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.write_record(r).map_err(fail)?;
    }
    w.flush().map_err(|e| CliError::Numerical(format!("cannot write {}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::Numerical(format!("cannot serialise {}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Numerical(format!("cannot write {}: {e}", path.display())))
}
