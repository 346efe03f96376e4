//! Tabular results and the files written for them.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Named table with fixed columns; cells are JSON scalars.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&'static str]) -> Self {
        Table { name: name.into(), columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }

    /// Rows of any serializable struct, columns taken from its field names.
    pub fn from_records<T: Serialize>(
        name: impl Into<String>,
        columns: &[&'static str],
        records: &[T],
    ) -> Result<Self, CliError> {
        let mut t = Table::new(name, columns);
        for r in records {
            let Value::Object(map) = serde_json::to_value(r)? else {
                return Err(CliError::Output("record is not a struct".into()));
            };
            t.push(columns.iter().map(|c| map.get(*c).cloned().unwrap_or(Value::Null)).collect());
        }
        Ok(t)
    }

    pub fn write<W: Write>(&self, mut w: W, format: Format) -> Result<(), CliError> {
        match format {
            Format::Csv => {
                let mut out = csv::Writer::from_writer(w);
                out.write_record(&self.columns)?;
                for row in &self.rows {
                    out.write_record(row.iter().map(cell))?;
                }
                out.flush().map_err(|e| CliError::Output(e.to_string()))?;
            }
            Format::Json => {
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|row| {
                        let map: Map<String, Value> =
                            self.columns.iter().map(|c| c.to_string()).zip(row.iter().cloned()).collect();
                        Value::Object(map)
                    })
                    .collect();
                serde_json::to_writer_pretty(&mut w, &rows)?;
                writeln!(w).map_err(|e| CliError::Output(e.to_string()))?;
            }
        }
        Ok(())
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Everything a task produced.
#[derive(Clone, Debug, Default)]
pub struct Report {
    pub tables: Vec<Table>,
    /// Human-readable lines printed after the run.
    pub lines: Vec<String>,
    /// Derived numbers (fits, verdict inputs) saved as `summary.json`.
    pub summary: Map<String, Value>,
}

impl Report {
    pub fn line(&mut self, s: impl Into<String>) {
        self.lines.push(s.into());
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) {
        self.summary.insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    /// Writes one file per table plus `summary.json`; returns the paths.
    pub fn write_to(&self, dir: &Path, format: Format) -> Result<Vec<PathBuf>, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let mut written = Vec::new();
        for t in &self.tables {
            let path = dir.join(format!("{}.{}", t.name, format.extension()));
            let file = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
            t.write(std::io::BufWriter::new(file), format)?;
            written.push(path);
        }
        let path = dir.join("summary.json");
        write_json(&path, &Value::Object(self.summary.clone()))?;
        written.push(path);
        Ok(written)
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}
