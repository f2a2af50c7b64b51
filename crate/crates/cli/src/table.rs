//! Numeric result tables and their CSV form.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::CliError;

/// Shortest round-trip decimal, in exponent form for very small or large values.
pub fn format_real(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-5..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

/// A rectangular table of reals with `key: value` metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub metadata: Vec<(String, String)>,
}

impl ResultTable {
    pub fn new<S: Into<String>>(name: &str, columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            name: name.into(),
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
            metadata: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) -> Result<(), CliError> {
        if row.len() != self.columns.len() {
            return Err(CliError::Engine(format!(
                "table {}: row of width {} for {} columns",
                self.name,
                row.len(),
                self.columns.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) {
        self.metadata.push((key.into(), value.to_string()));
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Values of column `name`.
    pub fn values(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.column(name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    /// CSV text: `# key: value` lines, then the header and rows.
    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut out = Vec::new();
        for (k, v) in &self.metadata {
            writeln!(out, "# {k}: {v}").expect("writing to memory");
        }
        {
            let mut w = csv::Writer::from_writer(&mut out);
            let io = |e: csv::Error| CliError::Engine(format!("table {}: {e}", self.name));
            w.write_record(&self.columns).map_err(io)?;
            for row in &self.rows {
                w.write_record(row.iter().map(|v| format_real(*v))).map_err(io)?;
            }
            w.flush().map_err(|e| CliError::Engine(e.to_string()))?;
        }
        Ok(String::from_utf8(out).expect("csv output is utf-8"))
    }

    /// Writes `<dir>/<name>.csv`, creating `dir` if needed.
    pub fn write_csv(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let io = |e: std::io::Error| CliError::Engine(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        let path = dir.join(format!("{}.csv", self.name));
        std::fs::write(&path, self.to_csv()?).map_err(io)?;
        Ok(path)
    }
}
