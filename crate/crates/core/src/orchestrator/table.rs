use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};

/// A result table kept both as display cells and as JSON records.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub records: Vec<Value>,
}

impl Table {
    pub fn new(title: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            title: title.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            records: Vec::new(),
        }
    }

    pub fn push<R: Serialize>(&mut self, cells: Vec<String>, record: &R) -> Result<()> {
        debug_assert_eq!(cells.len(), self.columns.len());
        let record = serde_json::to_value(record).map_err(|e| Error::invalid(e.to_string()))?;
        self.rows.push(cells);
        self.records.push(record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Aligned plain text; the first column is left-aligned, the rest right-aligned.
    pub fn render(&self) -> String {
        let mut widths: Vec<usize> = self.columns.iter().map(|c| c.chars().count()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |cells: &[String]| -> String {
            let mut s = String::new();
            for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
                if i > 0 {
                    s.push_str("  ");
                }
                if i == 0 {
                    let _ = write!(s, "{cell:<w$}");
                } else {
                    let _ = write!(s, "{cell:>w$}");
                }
            }
            s.trim_end().to_string()
        };
        let mut out = format!("{}\n", self.title);
        out.push_str(&line(&self.columns));
        out.push('\n');
        let total: usize = widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1);
        out.push_str(&"-".repeat(total));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&line(row));
            out.push('\n');
        }
        out
    }

    /// Writes `<stem>.txt` and `<stem>.jsonl` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        let txt = dir.join(format!("{stem}.txt"));
        std::fs::write(&txt, self.render()).map_err(|e| Error::io(&txt, e))?;
        crate::corpus::write_jsonl(&dir.join(format!("{stem}.jsonl")), self.records.iter())
    }
}

pub fn fmt3(v: f64) -> String {
    format!("{v:.3}")
}

pub fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}
