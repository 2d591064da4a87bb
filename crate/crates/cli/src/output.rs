//! Deterministic CSV and JSON writers.
//!
//! Every float is written with 17 significant digits in exponent form, maps
//! are key-sorted, and CSV records end in CRLF, so the same inputs always
//! produce the same bytes.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde_json::Value;

use crate::CliError;

pub const SCHEMA_VERSION: u64 = 1;

/// Seventeen significant digits; enough to round-trip any f64.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

/// Pretty JSON with fixed float formatting. Non-finite floats become null.
pub fn json_text(v: &Value) -> String {
    let mut out = String::new();
    write_value(v, 0, &mut out);
    out.push('\n');
    out
}

fn write_value(v: &Value, depth: usize, out: &mut String) {
    let pad = |d: usize, out: &mut String| out.extend(std::iter::repeat_n("  ", d));
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else {
                match n.as_f64() {
                    Some(x) if x.is_finite() => out.push_str(&num(x)),
                    _ => out.push_str("null"),
                }
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            // numeric arrays stay on one line
            let flat = items.iter().all(|x| x.is_number() || x.is_null());
            out.push('[');
            for (k, item) in items.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                if flat {
                    if k > 0 {
                        out.push(' ');
                    }
                } else {
                    out.push('\n');
                    pad(depth + 1, out);
                }
                write_value(item, depth + 1, out);
            }
            if !flat {
                out.push('\n');
                pad(depth, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push('{');
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            for (k, key) in keys.into_iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                out.push('\n');
                pad(depth + 1, out);
                out.push_str(&Value::String(key.clone()).to_string());
                out.push_str(": ");
                write_value(&map[key], depth + 1, out);
            }
            out.push('\n');
            pad(depth, out);
            out.push('}');
        }
    }
}

/// Output directory plus the format switches from the config.
pub struct Sink {
    root: PathBuf,
    pub csv: bool,
    pub json: bool,
    written: Vec<PathBuf>,
}

impl Sink {
    pub fn create(root: &Path, csv: bool, json: bool) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            csv,
            json,
            written: Vec::new(),
        })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    /// Writes a CSV table when CSV output is enabled; returns the file name.
    pub fn table(
        &mut self,
        name: &str,
        header: &[&str],
        rows: impl IntoIterator<Item = Vec<String>>,
    ) -> Result<Option<String>, CliError> {
        if !self.csv {
            return Ok(None);
        }
        let path = self.root.join(name);
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_path(&path)
            .map_err(|e| CliError::csv(&path, e))?;
        w.write_record(header)
            .map_err(|e| CliError::csv(&path, e))?;
        for row in rows {
            w.write_record(&row).map_err(|e| CliError::csv(&path, e))?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        self.written.push(path);
        Ok(Some(name.to_string()))
    }

    /// Complex samples against their coordinate.
    pub fn mode_function(
        &mut self,
        name: &str,
        coord: &str,
        xs: &[f64],
        f: &[Complex64],
    ) -> Result<Option<String>, CliError> {
        let rows = xs
            .iter()
            .zip(f)
            .map(|(x, v)| vec![num(*x), num(v.re), num(v.im)]);
        self.table(name, &[coord, "re", "im"], rows)
    }

    pub fn report(&mut self, name: &str, v: &Value) -> Result<(), CliError> {
        if self.json {
            self.document(name, v)?;
        }
        Ok(())
    }

    /// JSON written regardless of the format switches (provenance).
    pub fn document(&mut self, name: &str, v: &Value) -> Result<(), CliError> {
        let path = self.root.join(name);
        fs::write(&path, json_text(v)).map_err(|e| CliError::io(&path, e))?;
        self.written.push(path);
        Ok(())
    }
}
