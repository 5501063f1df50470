//! Machine-readable command reports.

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub command: String,
    /// SHA-256 of the canonical JSON of the effective configuration and input digests.
    pub config_hash: String,
    pub seed: Option<u64>,
    pub results: Value,
}

impl Report {
    pub fn new(command: &str, config: &Value, seed: Option<u64>, results: Value) -> Self {
        let canonical = serde_json::to_vec(&json!({ "command": command, "config": config }))
            .expect("json values serialize");
        Self {
            command: command.to_owned(),
            config_hash: hex::encode(Sha256::digest(canonical)),
            seed,
            results,
        }
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// JSON number, or `"+inf"` / `"-inf"` / `"nan"` for non-finite values.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x.is_nan() {
        json!("nan")
    } else if x > 0.0 {
        json!("+inf")
    } else {
        json!("-inf")
    }
}

pub fn opt_num(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn non_finite_values_become_strings() {
        assert_eq!(num(f64::INFINITY), json!("+inf"));
        assert_eq!(num(f64::NEG_INFINITY), json!("-inf"));
        assert_eq!(num(f64::NAN), json!("nan"));
        assert_eq!(num(0.5), json!(0.5));
        assert_eq!(opt_num(None), Value::Null);
    }

    #[test]
    fn hash_depends_on_config_only() {
        let a = Report::new("sweep", &json!({"t": 1}), None, json!({"x": 1}));
        let b = Report::new("sweep", &json!({"t": 1}), None, json!({"x": 2}));
        let c = Report::new("sweep", &json!({"t": 2}), None, json!({"x": 1}));
        assert_eq!(a.config_hash, b.config_hash);
        assert_ne!(a.config_hash, c.config_hash);
        assert_eq!(a.config_hash.len(), 64);
    }
}
