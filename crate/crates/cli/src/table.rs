//! Result tables: a fixed header per experiment, cells rendered with the
//! shortest round-trip float formatting so output bytes depend only on the
//! values.

use std::io::Write;
use std::path::Path;

use lpsections::fit::ols;
use lpsections::{FitResult, PExponent};

use crate::error::{CliError, CliResult};
use crate::expr::Expr;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Real(f64),
    Text(String),
    Empty,
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(v) => Some(*v as f64),
            Cell::Real(v) => Some(*v),
            Cell::Text(s) => s.parse().ok(),
            Cell::Empty => None,
        }
    }

    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Real(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn parse(s: &str) -> Cell {
        if s.is_empty() {
            Cell::Empty
        } else if let Ok(v) = s.parse::<u64>() {
            Cell::Int(v)
        } else if let Ok(v) = s.parse::<f64>() {
            Cell::Real(v)
        } else {
            Cell::Text(s.to_string())
        }
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<PExponent> for Cell {
    fn from(p: PExponent) -> Self {
        Cell::Real(p.value())
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| *h == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[i].as_f64()).collect())
    }

    /// `# `-prefixed comment lines, the header, then the rows.
    pub fn write_csv<W: Write>(&self, out: W, comments: &[String]) -> CliResult<()> {
        let mut out = out;
        for c in comments {
            writeln!(out, "# {c}").map_err(|e| CliError::Io {
                path: "<csv>".into(),
                source: e,
            })?;
        }
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::render))?;
        }
        w.flush().map_err(|e| CliError::Io {
            path: "<csv>".into(),
            source: e,
        })?;
        Ok(())
    }

    /// Reads a file produced by [`Table::write_csv`]; comment lines are
    /// skipped.
    pub fn read_csv(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<Cell>>)> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
        let header = r.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec?.iter().map(Cell::parse).collect());
        }
        Ok((header, rows))
    }
}

/// Least-squares line through `(x_expr, y_expr)` evaluated on every row.
/// Rows where a referenced cell is empty are skipped.
pub fn fit_exponent(table: &Table, x_expr: &str, y_expr: &str) -> CliResult<FitResult> {
    let (xe, ye) = (Expr::parse(x_expr)?, Expr::parse(y_expr)?);
    for name in xe.columns().into_iter().chain(ye.columns()) {
        if table.column_index(name).is_none() && name != "pi" && name != "e" {
            return Err(CliError::Config(format!(
                "fit refers to unknown column '{name}'; columns are {}",
                table.header.join(",")
            )));
        }
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let used: Vec<usize> = xe
        .columns()
        .into_iter()
        .chain(ye.columns())
        .filter_map(|name| table.column_index(name))
        .collect();
    for row in table
        .rows
        .iter()
        .filter(|row| used.iter().all(|&i| row[i].as_f64().is_some()))
    {
        let lookup = |name: &str| table.column_index(name).and_then(|i| row[i].as_f64());
        xs.push(xe.eval(&lookup)?);
        ys.push(ye.eval(&lookup)?);
    }
    if xs.len() < 3 {
        return Err(CliError::Config(format!("fit needs at least 3 rows, got {}", xs.len())));
    }
    Ok(ols(&xs, &ys, format!("{y_expr} ~ {x_expr}"))?)
}
