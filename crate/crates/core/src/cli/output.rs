//! Input loading and deterministic rendering.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use clap::ValueEnum;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};

/// Significant digits kept for every float in JSON output.
pub const SIGNIFICANT_DIGITS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
    Table,
}

/// Reads and deserializes a JSON input file, reporting syntax and schema
/// errors with their line and column.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_json(&text, &path.display().to_string())
}

pub fn parse_json<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Rounds a float to [`SIGNIFICANT_DIGITS`] significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().unwrap_or(x)
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64() {
                if let Some(r) = serde_json::Number::from_f64(round_sig(x)) {
                    *n = r;
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Serializes `report` as pretty JSON with rounded floats.
pub fn to_json<T: Serialize>(report: &T) -> Result<Value> {
    let mut v = serde_json::to_value(report).map_err(|e| Error::Internal(e.to_string()))?;
    round_value(&mut v);
    Ok(v)
}

/// Rows for the CSV and aligned-table views.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Table {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let line = |cells: &[String]| {
            cells
                .iter()
                .map(|c| {
                    if c.contains([',', '"', '\n']) {
                        format!("\"{}\"", c.replace('"', "\"\""))
                    } else {
                        c.clone()
                    }
                })
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut out = line(&self.headers);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&line(row));
            out.push('\n');
        }
        out
    }

    pub fn to_aligned(&self) -> String {
        let mut widths: Vec<usize> = self.headers.iter().map(|h| h.len()).collect();
        for row in &self.rows {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        let mut line = |cells: &[String]| {
            let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, &w)| format!("{c:>w$}")).collect();
            let _ = writeln!(out, "{}", padded.join("  ").trim_end());
        };
        line(&self.headers);
        let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
        line(&rule);
        for row in &self.rows {
            line(row);
        }
        out
    }
}

/// Number cell for table views.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        let r = round_sig(x);
        if r != 0.0 && !(1e-4..1e15).contains(&r.abs()) {
            format!("{r:e}")
        } else {
            format!("{r}")
        }
    } else {
        x.to_string()
    }
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_else(|| "-".into())
}

/// A command's result in both structured and tabular form.
pub struct Report {
    pub json: Value,
    pub table: Table,
}

impl Report {
    pub fn render(&self, format: Format) -> Result<String> {
        Ok(match format {
            Format::Json => {
                let mut s = serde_json::to_string_pretty(&self.json).map_err(|e| Error::Internal(e.to_string()))?;
                s.push('\n');
                s
            }
            Format::Csv => self.table.to_csv(),
            Format::Table => self.table.to_aligned(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_keeps_nine_digits() {
        assert_eq!(round_sig(0.1 + 0.2), 0.3);
        assert_eq!(round_sig(2.0 / 3.0), 0.666666667);
        assert_eq!(round_sig(123456789012.0), 123456789000.0);
        assert_eq!(round_sig(0.0), 0.0);
        let v = to_json(&serde_json::json!({"x": [1.0 / 3.0], "n": 5})).unwrap();
        assert_eq!(v.to_string(), r#"{"x":[0.333333333],"n":5}"#);
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = parse_json::<Vec<u32>>("[1,\n 2,\n x]", "in.json").unwrap_err();
        match err {
            Error::Parse { line, column, .. } => assert_eq!((line, column), (3, 2)),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn table_views() {
        let mut t = Table::new(["a", "bb"]);
        t.push(vec!["1".into(), "x,y".into()]);
        assert_eq!(t.to_csv(), "a,bb\n1,\"x,y\"\n");
        assert_eq!(t.to_aligned(), "a   bb\n-  ---\n1  x,y\n");
        assert_eq!(num(2.5e-14), "2.5e-14");
        assert_eq!(num(-0.25), "-0.25");
    }
}
