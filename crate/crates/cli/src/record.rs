//! Result records and their JSON-lines and CSV encodings.

use crate::error::{CliError, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: Option<u64>,
    pub version: String,
    /// Seconds since the Unix epoch; `SOURCE_DATE_EPOCH` overrides the clock.
    pub timestamp: u64,
}

impl Provenance {
    pub fn now(seed: Option<u64>) -> Self {
        let timestamp = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.parse().ok()).unwrap_or_else(|| {
            std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs())
        });
        Provenance { seed, version: env!("CARGO_PKG_VERSION").to_string(), timestamp }
    }
}

/// One emitted result. The same shape is used by every subcommand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub op: String,
    pub params: BTreeMap<String, Value>,
    pub values: BTreeMap<String, Value>,
    pub pass: Option<bool>,
    pub provenance: Provenance,
}

impl ResultRecord {
    pub fn new(op: &str) -> Self {
        ResultRecord {
            op: op.to_string(),
            params: BTreeMap::new(),
            values: BTreeMap::new(),
            pass: None,
            provenance: Provenance { seed: None, version: String::new(), timestamp: 0 },
        }
    }

    pub fn param(mut self, k: &str, v: impl Into<Value>) -> Self {
        self.params.insert(k.to_string(), v.into());
        self
    }

    pub fn value(mut self, k: &str, v: impl Into<Value>) -> Self {
        self.values.insert(k.to_string(), v.into());
        self
    }

    /// Exact integer payload; values beyond `u64` are stored as decimal strings.
    pub fn count(self, k: &str, v: u128) -> Self {
        match u64::try_from(v) {
            Ok(x) => self.value(k, x),
            Err(_) => self.value(k, v.to_string()),
        }
    }

    /// Float payload; non-finite values are stored as strings.
    pub fn real(self, k: &str, v: f64) -> Self {
        if v.is_finite() {
            self.value(k, v)
        } else {
            self.value(k, v.to_string())
        }
    }

    pub fn with_pass(mut self, pass: bool) -> Self {
        self.pass = Some(pass);
        self
    }

    /// The record without provenance, for comparisons.
    pub fn content(&self) -> (String, &BTreeMap<String, Value>, &BTreeMap<String, Value>, Option<bool>) {
        (self.op.clone(), &self.params, &self.values, self.pass)
    }
}

pub fn to_jsonl(records: &[ResultRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).map_err(|e| CliError::Record(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

/// Parse one JSON-lines record.
pub fn parse_record(line: &str) -> Result<ResultRecord> {
    serde_json::from_str(line).map_err(|e| CliError::Record(e.to_string()))
}

pub fn parse_jsonl(text: &str) -> Result<Vec<ResultRecord>> {
    text.lines().filter(|l| !l.trim().is_empty()).map(parse_record).collect()
}

fn csv_cell(v: Option<&Value>) -> String {
    let s = match v {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(other) => other.to_string(),
    };
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s
    }
}

/// CSV with a header row. Columns are `op`, then every parameter and value name in order of first
/// appearance, then `pass`.
pub fn to_csv(records: &[ResultRecord]) -> String {
    let mut params: Vec<&String> = Vec::new();
    let mut values: Vec<&String> = Vec::new();
    for r in records {
        for k in r.params.keys() {
            if !params.contains(&k) {
                params.push(k);
            }
        }
        for k in r.values.keys() {
            if !values.contains(&k) {
                values.push(k);
            }
        }
    }
    let mut out = String::from("op");
    for k in &params {
        out.push(',');
        out.push_str(k);
    }
    for k in &values {
        out.push(',');
        out.push_str(k);
    }
    out.push_str(",pass\n");
    for r in records {
        out.push_str(&csv_cell(Some(&Value::String(r.op.clone()))));
        for k in &params {
            out.push(',');
            out.push_str(&csv_cell(r.params.get(*k)));
        }
        for k in &values {
            out.push(',');
            out.push_str(&csv_cell(r.values.get(*k)));
        }
        out.push(',');
        out.push_str(&r.pass.map(|p| p.to_string()).unwrap_or_default());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let r = ResultRecord::new("kloos").param("q", 7).count("big", u128::MAX).real("x", 0.25).with_pass(true);
        let text = to_jsonl(std::slice::from_ref(&r)).unwrap();
        assert_eq!(parse_jsonl(&text).unwrap(), vec![r]);
    }

    #[test]
    fn csv_header_and_quoting() {
        let a = ResultRecord::new("x").param("q", 2).value("note", "a,b");
        let b = ResultRecord::new("x").param("p", 3).with_pass(false);
        let csv = to_csv(&[a, b]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "op,q,p,note,pass");
        assert_eq!(lines[1], "x,2,,\"a,b\",");
        assert_eq!(lines[2], "x,,3,,false");
    }
}
