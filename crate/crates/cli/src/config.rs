//! Flat `key = value` configuration files, parameter ranges, and typed parameter lookup.

use crate::error::{invalid, Result};
use horo_core::geomnum::BoxRegion;
use std::collections::BTreeMap;
use std::str::FromStr;

/// Longest range a single parameter may expand to.
pub const MAX_RANGE_LEN: usize = 10_000_000;

/// Parse a flat configuration: one `key = value` per line, `#` starts a comment, blank lines are
/// ignored, and keys may not repeat.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split_once('#').map_or(raw, |(a, _)| a).trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| invalid(format!("line {}: expected `key = value`", no + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || !k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.') {
            return Err(invalid(format!("line {}: bad key {k:?}", no + 1)));
        }
        if v.is_empty() {
            return Err(invalid(format!("line {}: empty value for {k}", no + 1)));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(invalid(format!("line {}: duplicate key {k}", no + 1)));
        }
    }
    Ok(out)
}

/// Parse a comma-separated list of integers and inclusive ranges `a..b` or `a..b:step`.
/// A range with `a > b` is empty.
pub fn parse_range(s: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    let s = s.trim();
    if s.is_empty() {
        return Ok(out);
    }
    for item in s.split(',') {
        let item = item.trim();
        let num = |t: &str| u64::from_str(t.trim()).map_err(|_| invalid(format!("bad integer {t:?} in range")));
        match item.split_once("..") {
            None => out.push(num(item)?),
            Some((a, rest)) => {
                let (b, step) = match rest.split_once(':') {
                    Some((b, st)) => (num(b)?, num(st)?),
                    None => (num(rest)?, 1),
                };
                let a = num(a)?;
                if step == 0 {
                    return Err(invalid("range step must be positive"));
                }
                if a <= b {
                    let len = ((b - a) / step) as u128 + 1;
                    if out.len() as u128 + len > MAX_RANGE_LEN as u128 {
                        return Err(invalid("range too long"));
                    }
                    let mut x = a;
                    loop {
                        out.push(x);
                        match x.checked_add(step) {
                            Some(y) if y <= b => x = y,
                            _ => break,
                        }
                    }
                }
            }
        }
        if out.len() > MAX_RANGE_LEN {
            return Err(invalid("range too long"));
        }
    }
    Ok(out)
}

/// Parse a box union `lo_1,..,lo_d:hi_1,..,hi_d;...` into half-open boxes. A leading `!` marks
/// the boxes as possibly overlapping.
pub fn parse_boxes(s: &str) -> Result<BoxRegion> {
    let s = s.trim();
    let (overlapping, body) = match s.strip_prefix('!') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let mut boxes = Vec::new();
    for part in body.split(';') {
        let (lo, hi) = part.split_once(':').ok_or_else(|| invalid(format!("box {part:?} needs `lo:hi`")))?;
        let coords = |t: &str| -> Result<Vec<f64>> {
            t.split(',')
                .map(|x| {
                    let v: f64 = x.trim().parse().map_err(|_| invalid(format!("bad coordinate {x:?}")))?;
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(invalid("coordinates must be finite"))
                    }
                })
                .collect()
        };
        boxes.push((coords(lo)?, coords(hi)?));
    }
    BoxRegion::new(boxes, !overlapping).map_err(|e| invalid(e.to_string()))
}

/// Parameters of one run: configuration file entries overridden by command-line flags.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Params {
    map: BTreeMap<String, String>,
}

impl Params {
    pub fn new(map: BTreeMap<String, String>) -> Self {
        Params { map }
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.map.insert(key.to_string(), value.into());
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| s.as_str())
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.map
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| invalid(format!("bad value {v:?} for {key}"))),
        }
    }

    pub fn get_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key).map(|v| v.parse().map_err(|_| invalid(format!("bad value {v:?} for {key}")))).transpose()
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.raw(key).unwrap_or(default)
    }

    pub fn range(&self, key: &str, default: &str) -> Result<Vec<u64>> {
        parse_range(self.raw(key).unwrap_or(default))
    }

    /// Comma-separated words.
    pub fn list(&self, key: &str, default: &str) -> Vec<String> {
        self.str_or(key, default).split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
    }

    /// Relative tolerance override for a golden field, from `tol.<field>`.
    pub fn tolerance(&self, field: &str) -> Option<f64> {
        self.raw(&format!("tol.{field}")).and_then(|v| v.parse().ok())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_lines() {
        let c = parse_config("# header\nq = 1..10\n\nseed=7 # trailing\n").unwrap();
        assert_eq!(c.get("q").unwrap(), "1..10");
        assert_eq!(c.get("seed").unwrap(), "7");
        assert!(parse_config("q = 1\nq = 2").is_err());
        assert!(parse_config("no equals").is_err());
        assert!(parse_config("k =").is_err());
        assert!(parse_config("bad key = 1").is_err());
    }

    #[test]
    fn ranges() {
        assert_eq!(parse_range("1..5").unwrap(), vec![1, 2, 3, 4, 5]);
        assert_eq!(parse_range("2, 3,5..9:2").unwrap(), vec![2, 3, 5, 7, 9]);
        assert!(parse_range("5..1").unwrap().is_empty());
        assert!(parse_range("").unwrap().is_empty());
        assert!(parse_range("1..x").is_err());
        assert!(parse_range("1..3:0").is_err());
        assert!(parse_range("0..18446744073709551615").is_err());
        assert_eq!(parse_range("18446744073709551614..18446744073709551615").unwrap().len(), 2);
    }

    #[test]
    fn boxes() {
        let b = parse_boxes("-1,-1:1,1").unwrap();
        assert_eq!(b.boxes.len(), 1);
        assert!((b.volume() - 4.0).abs() < 1e-12);
        assert!(parse_boxes("0,0:1,1;0.5,0.5:2,2").is_err());
        assert_eq!(parse_boxes("!0,0:1,1;0.5,0.5:2,2").unwrap().boxes.len(), 2);
        assert!(parse_boxes("0:1,1").is_err());
        assert!(parse_boxes("1:0").is_err());
        assert!(parse_boxes("0:inf").is_err());
    }
}
