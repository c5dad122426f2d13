//! CSV tables and run manifests.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl Cell {
    pub fn opt(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Float)
    }

    pub fn render(&self) -> String {
        match self {
            Cell::Float(x) => format_float(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<u64> for Cell {
    fn from(i: u64) -> Self {
        Cell::Int(i)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

/// Seventeen significant digits in scientific notation, enough to round-trip any f64.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, headers: Vec<String>) -> Self {
        Self {
            name: name.into(),
            headers,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(
            row.len(),
            self.headers.len(),
            "row width differs from header in {}",
            self.name
        );
        self.rows.push(row);
    }

    /// Appends the rows of a table with the same header.
    pub fn extend(&mut self, other: Table) -> Result<()> {
        ensure!(
            self.headers == other.headers,
            "cannot merge tables {} and {}",
            self.name,
            other.name
        );
        self.rows.extend(other.rows);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(Vec::new());
        w.write_record(&self.headers)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }

    pub fn write(&self, dir: &Path, prefix: &str) -> Result<PathBuf> {
        let path = dir.join(format!("{prefix}.{}.csv", self.name));
        fs::write(&path, self.to_csv()?).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// SHA-256 of the JSON encoding of `value`, in hex.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub name: String,
    pub config_hash: String,
    pub seed: u64,
    pub runtime_seconds: f64,
    pub version: &'static str,
    pub threads: usize,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, name: &str, config_hash: String, seed: u64) -> Self {
        Self {
            command: command.into(),
            name: name.into(),
            config_hash,
            seed,
            runtime_seconds: 0.0,
            version: env!("CARGO_PKG_VERSION"),
            threads: rayon::current_num_threads(),
            files: Vec::new(),
        }
    }

    pub fn record(&mut self, path: &Path) {
        let name = path.file_name().map_or_else(
            || path.display().to_string(),
            |n| n.to_string_lossy().into(),
        );
        self.files.push(name);
    }

    pub fn write(&self, dir: &Path, prefix: &str) -> Result<PathBuf> {
        let path = dir.join(format!("{prefix}.manifest.json"));
        write_json(&path, self)?;
        Ok(path)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
