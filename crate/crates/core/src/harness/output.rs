//! Result tables and file output.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Header plus rows, written as CSV in row order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub header: String,
    pub rows: Vec<String>,
}

impl Table {
    pub fn new(header: &str) -> Self {
        Self { header: header.to_string(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: String) {
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        writeln!(out, "{}", self.header).unwrap();
        for r in &self.rows {
            writeln!(out, "{r}").unwrap();
        }
        out
    }

    /// Column `name` parsed as numbers.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.header.split(',').position(|h| h == name)?;
        self.rows
            .iter()
            .map(|r| r.split(',').nth(idx).and_then(|v| v.parse().ok()))
            .collect()
    }

    /// Column `name` as raw text.
    pub fn text_column(&self, name: &str) -> Option<Vec<String>> {
        let idx = self.header.split(',').position(|h| h == name)?;
        self.rows.iter().map(|r| r.split(',').nth(idx).map(str::to_string)).collect()
    }
}

pub fn write_results(table: &Table, path: &Path) -> Result<()> {
    write_bytes(path, &table.to_bytes())
}

/// Writes `bytes` to `path`; a missing parent directory is reported by name.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        if !dir.is_dir() {
            return Err(Error::Io {
                context: "output directory does not exist",
                path: dir.to_path_buf(),
                source: std::io::Error::from(std::io::ErrorKind::NotFound),
            });
        }
    }
    std::fs::write(path, bytes).map_err(|source| Error::Io {
        context: "cannot write output",
        path: path.to_path_buf(),
        source,
    })
}
