//! Run reports and CSV outputs.
//!
//! Every command writes `report.json` into its output directory. Floats that
//! are not finite are written as the strings `"inf"` and `"-inf"`, NaN as
//! `null`. Wall-clock figures live under the top-level `timing` key so that
//! two runs with the same seed produce identical files apart from it.

use std::io::Write as _;
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::error::{CliError, Result};

/// Writes through a temporary file in the same directory and renames it into
/// place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// JSON value for a float.
pub fn num(x: f64) -> Value {
    if x.is_nan() {
        Value::Null
    } else if x == f64::INFINITY {
        json!("inf")
    } else if x == f64::NEG_INFINITY {
        json!("-inf")
    } else {
        json!(x)
    }
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

/// Report under construction.
#[derive(Debug, Default)]
pub struct Report {
    pub body: Map<String, Value>,
    pub timing: Map<String, Value>,
}

impl Report {
    pub fn new(command: &str, scenario: &str) -> Self {
        let mut r = Report::default();
        r.set("command", json!(command));
        r.set("scenario", json!(scenario));
        r
    }

    pub fn set(&mut self, key: &str, v: Value) {
        self.body.insert(key.to_string(), v);
    }

    pub fn time(&mut self, key: &str, seconds: f64) {
        self.timing.insert(key.to_string(), num(seconds));
    }

    pub fn to_value(&self) -> Value {
        let mut m = self.body.clone();
        m.insert("timing".into(), Value::Object(self.timing.clone()));
        Value::Object(m)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_value()).expect("report serializes");
        write_atomic(&dir.join("report.json"), format!("{text}\n").as_bytes())
    }
}

/// A report with its `timing` key removed, for run-to-run comparisons.
pub fn without_timing(mut v: Value) -> Value {
    if let Value::Object(m) = &mut v {
        m.remove("timing");
    }
    v
}

/// CSV from named columns of equal length.
pub fn columns_csv(names: &[&str], cols: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(names).expect("in-memory write");
    for i in 0..cols.first().map_or(0, Vec::len) {
        w.write_record(cols.iter().map(|c| c[i].as_str())).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

pub fn fmt_col(xs: &[f64]) -> Vec<String> {
    xs.iter().map(|x| x.to_string()).collect()
}
