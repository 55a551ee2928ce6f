use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Rounds to `digits` significant digits (via decimal formatting, so the
/// result prints back as at most `digits` digits).
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { 0.0 } else { x };
    }
    let s = format!("{:.*e}", digits.saturating_sub(1), x);
    s.parse().expect("formatted float parses")
}

const SIG: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Number(f64),
    Text(String),
    /// Undefined value (e.g. a metric with a zero denominator).
    Absent,
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Number(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Cell::Text(s) => Some(s),
            _ => None,
        }
    }

    fn rounded(&self) -> Cell {
        match self {
            Cell::Number(x) if x.is_finite() => Cell::Number(round_sig(*x, SIG)),
            Cell::Number(_) => Cell::Absent,
            other => other.clone(),
        }
    }

    fn csv_field(&self) -> String {
        match self.rounded() {
            Cell::Number(x) => x.to_string(),
            Cell::Text(s) => s,
            Cell::Absent => "NA".to_string(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Number(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Absent, Cell::Number)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Number(x as f64)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Number(x as f64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

/// A named table; the first column labels the rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            name: name.into(),
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width of table {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Row whose first cell is the text `label`.
    pub fn row(&self, label: &str) -> Option<&[Cell]> {
        self.rows
            .iter()
            .find(|r| r.first().and_then(Cell::as_str) == Some(label))
            .map(Vec::as_slice)
    }

    pub fn get(&self, row_label: &str, column: &str) -> Option<&Cell> {
        let j = self.column(column)?;
        self.row(row_label).map(|r| &r[j])
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::csv_field)).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    fn rounded(&self) -> Table {
        Table {
            rows: self.rows.iter().map(|r| r.iter().map(Cell::rounded).collect()).collect(),
            ..self.clone()
        }
    }
}

/// A self-describing result document: the command, its fully resolved
/// configuration, free-form notes on evaluation semantics, and tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub config: Value,
    #[serde(default)]
    pub notes: BTreeMap<String, String>,
    pub tables: Vec<Table>,
}

impl Report {
    pub fn new(command: impl Into<String>, config: Value) -> Self {
        Self {
            command: command.into(),
            config,
            notes: BTreeMap::new(),
            tables: Vec::new(),
        }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// JSON with sorted keys and numbers rounded to 6 significant digits.
    pub fn to_json(&self) -> String {
        let rounded = Report {
            tables: self.tables.iter().map(Table::rounded).collect(),
            ..self.clone()
        };
        // serde_json::Value keeps object keys sorted
        let v = serde_json::to_value(&rounded).expect("serializable");
        let mut s = serde_json::to_string_pretty(&v).expect("serializable");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(Error::config(format!("unknown report format {s:?}"))),
        }
    }
}

/// Writes `<stem>.json`, or one `<stem>_<table>.csv` per table (`<stem>.csv`
/// for a table named like the stem). Returns the paths written.
pub fn emit_report(report: &Report, dir: impl AsRef<Path>, stem: &str, format: ReportFormat) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut written = Vec::new();
    let mut put = |path: PathBuf, text: String| -> Result<()> {
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    match format {
        ReportFormat::Json => put(dir.join(format!("{stem}.json")), report.to_json())?,
        ReportFormat::Csv => {
            for t in &report.tables {
                let name = if t.name == stem { format!("{stem}.csv") } else { format!("{stem}_{}.csv", t.name) };
                put(dir.join(name), t.to_csv())?;
            }
        }
    }
    Ok(written)
}

pub fn load_report(path: impl AsRef<Path>) -> Result<Report> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        Error::Validation(vec![super::Diagnostic {
            file: path.display().to_string(),
            location: format!("{}:{}", e.line(), e.column()),
            kind: super::DiagnosticKind::Syntax,
            message: e.to_string(),
        }])
    })
}
