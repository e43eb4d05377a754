use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Text(String),
    Empty,
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(x) => Some(*x),
            _ => None,
        }
    }

    fn render(&self) -> String {
        match self {
            Cell::Num(x) => format_sig9(*x),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Num(x as f64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.into())
    }
}

/// Shortest decimal that round-trips the value rounded to 9 significant
/// digits.
pub fn format_sig9(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub scenario: String,
    pub config_sha256: String,
    pub seed: u64,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub provenance: Provenance,
}

impl ResultTable {
    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i].as_f64()).collect())
    }
}

pub fn emit_csv(table: &ResultTable, path: &Path) -> Result<(), ExperimentError> {
    let io = |e: std::io::Error| ExperimentError::io(path, e);
    let file = File::create(path).map_err(io)?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file);
    let wrap = |e: csv::Error| ExperimentError::io(path, e.into());
    w.write_record(&table.columns).map_err(wrap)?;
    for row in &table.rows {
        w.write_record(row.iter().map(Cell::render)).map_err(wrap)?;
    }
    w.flush().map_err(io)
}

/// Reads a CSV written by [`emit_csv`]; numeric-looking cells become
/// numbers, blanks become empty.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<Cell>>), ExperimentError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| ExperimentError::io(path, e.into()))?;
    let columns = r
        .headers()
        .map_err(|e| ExperimentError::io(path, e.into()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| ExperimentError::Parse {
            path: path.into(),
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        rows.push(
            rec.iter()
                .map(|s| {
                    if s.is_empty() {
                        Cell::Empty
                    } else {
                        s.parse().map_or_else(|_| Cell::Text(s.into()), Cell::Num)
                    }
                })
                .collect(),
        );
    }
    Ok((columns, rows))
}

#[derive(Serialize)]
struct Sidecar<'a, C: Serialize> {
    provenance: &'a Provenance,
    columns: &'a [String],
    config: &'a C,
}

pub fn write_sidecar<C: Serialize>(table: &ResultTable, config: &C, path: &Path) -> Result<PathBuf, ExperimentError> {
    let side = path.with_extension("json");
    let body = serde_json::to_string_pretty(&Sidecar {
        provenance: &table.provenance,
        columns: &table.columns,
        config,
    })
    .expect("sidecar serializes");
    let mut f = File::create(&side).map_err(|e| ExperimentError::io(&side, e))?;
    f.write_all(body.as_bytes())
        .and_then(|_| f.write_all(b"\n"))
        .map_err(|e| ExperimentError::io(&side, e))?;
    Ok(side)
}
