//! Minimal CSV output: header row, then `{:.16e}` floats.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::error::Result;

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
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

fn render(cell: &Cell, out: &mut String) {
    match cell {
        Cell::Float(v) => write!(out, "{v:.16e}"),
        Cell::Int(v) => write!(out, "{v}"),
        Cell::Text(s) => write!(out, "{s}"),
    }
    .expect("writing to a String cannot fail");
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width must match header");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            for (k, cell) in row.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                render(cell, &mut out);
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

/// Dense matrix as CSV with columns `c0, c1, ...`.
pub fn matrix_table(m: &nalgebra::DMatrix<f64>) -> Table {
    let header: Vec<String> = (0..m.ncols()).map(|j| format!("c{j}")).collect();
    let mut t = Table::new(&header);
    for row in m.row_iter() {
        t.push(row.iter().map(|&v| Cell::Float(v)).collect());
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trips_floats() {
        let mut t = Table::new(&["s", "n", "value"]);
        t.push(vec!["kernel".into(), 8usize.into(), (1.0 / 3.0).into()]);
        let csv = t.to_csv();
        let line = csv.lines().nth(1).unwrap();
        let v: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(v, 1.0 / 3.0);
        assert!(csv.starts_with("s,n,value\n"));
    }
}
