//! Comparison of fresh records against a stored golden file.

use crate::config::Params;
use crate::record::ResultRecord;
use serde_json::Value;

/// Default relative tolerance for floating-point payloads.
pub const DEFAULT_REL_TOL: f64 = 1e-9;

/// Differences between `fresh` and `golden`, one line per offending field. Provenance is ignored;
/// integers and strings must match exactly, floats within the per-field tolerance.
pub fn diff(fresh: &[ResultRecord], golden: &[ResultRecord], params: &Params) -> Vec<String> {
    let mut out = Vec::new();
    if fresh.len() != golden.len() {
        out.push(format!("record count: {} vs golden {}", fresh.len(), golden.len()));
    }
    for (i, (a, b)) in fresh.iter().zip(golden).enumerate() {
        if a.op != b.op {
            out.push(format!("record {i}: op {:?} vs golden {:?}", a.op, b.op));
            continue;
        }
        if a.params != b.params {
            out.push(format!("record {i}: params differ"));
        }
        if a.pass != b.pass {
            out.push(format!("record {i}: pass {:?} vs golden {:?}", a.pass, b.pass));
        }
        let keys: std::collections::BTreeSet<&String> = a.values.keys().chain(b.values.keys()).collect();
        for k in keys {
            let tol = params.tolerance(k).unwrap_or(DEFAULT_REL_TOL);
            if !value_close(a.values.get(k), b.values.get(k), tol) {
                out.push(format!(
                    "record {i}: field {k}: {} vs golden {}",
                    a.values.get(k).map_or("missing".into(), |v| v.to_string()),
                    b.values.get(k).map_or("missing".into(), |v| v.to_string())
                ));
            }
        }
    }
    out
}

fn value_close(a: Option<&Value>, b: Option<&Value>, tol: f64) -> bool {
    match (a, b) {
        (Some(Value::Number(x)), Some(Value::Number(y))) => {
            if x.is_f64() || y.is_f64() {
                let (x, y) = (x.as_f64().unwrap_or(f64::NAN), y.as_f64().unwrap_or(f64::NAN));
                x == y || (x - y).abs() <= tol * x.abs().max(y.abs()).max(1e-300)
            } else {
                x == y
            }
        }
        (Some(Value::Array(x)), Some(Value::Array(y))) => {
            x.len() == y.len() && x.iter().zip(y).all(|(u, v)| value_close(Some(u), Some(v), tol))
        }
        _ => a == b,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerances() {
        let p = Params::default();
        let a = vec![ResultRecord::new("x").real("v", 1.0).value("n", 3)];
        let b = vec![ResultRecord::new("x").real("v", 1.0 + 1e-12).value("n", 3)];
        assert!(diff(&a, &b, &p).is_empty());
        let c = vec![ResultRecord::new("x").real("v", 1.1).value("n", 4)];
        let d = diff(&a, &c, &p);
        assert_eq!(d.len(), 2);
        assert!(d[0].contains("field n") && d[1].contains("field v"));
        let mut loose = Params::default();
        loose.set("tol.v", "0.2");
        assert_eq!(diff(&a, &c, &loose).len(), 1);
    }
}
