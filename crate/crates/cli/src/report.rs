//! Report assembly: a deterministic JSON document with every real serialized
//! to 17 significant digits (round-trip exact for doubles). Timings live
//! under `meta` and are excluded from the reproducible payload.

use metastab_core::error::{Error, Result};
use metastab_core::GameSpec;
use serde_json::{Map, Number, Value};
use sha2::{Digest, Sha256};
use std::str::FromStr;

/// Rewrites every floating-point number in the tree as a 17-significant-digit
/// decimal; non-finite values become strings.
pub fn canonicalize_reals(v: &mut Value) {
    match v {
        Value::Number(n) => {
            if n.is_i64() || n.is_u64() {
                return;
            }
            if let Some(f) = n.as_f64() {
                if f.is_finite() {
                    let text = format!("{f:.16e}");
                    *v = Value::Number(Number::from_str(&text).expect("formatted decimal parses"));
                } else {
                    *v = Value::String(format!("{f}"));
                }
            }
        }
        Value::Array(items) => {
            for item in items {
                canonicalize_reals(item);
            }
        }
        Value::Object(map) => {
            for (_, item) in map.iter_mut() {
                canonicalize_reals(item);
            }
        }
        _ => {}
    }
}

/// Content hash of the canonical game file.
pub fn fingerprint(game: &GameSpec) -> String {
    let mut hasher = Sha256::new();
    hasher.update(game.to_json().as_bytes());
    hex::encode(hasher.finalize())
}

pub struct ReportBuilder {
    command: Vec<String>,
    game: Value,
    sections: Vec<Value>,
    timings_ms: Vec<(String, f64)>,
}

impl ReportBuilder {
    pub fn new(command: Vec<String>) -> Self {
        ReportBuilder {
            command,
            game: Value::Null,
            sections: Vec::new(),
            timings_ms: Vec::new(),
        }
    }

    pub fn set_game(&mut self, g: &GameSpec, beta: Option<f64>) {
        let mut map = Map::new();
        map.insert("fingerprint".into(), Value::String(fingerprint(g)));
        if let Some(name) = &g.name {
            map.insert("name".into(), Value::String(name.clone()));
        }
        map.insert("n".into(), Value::from(g.n_players()));
        map.insert(
            "strategy_counts".into(),
            Value::from(g.strategy_counts().to_vec()),
        );
        map.insert("size".into(), Value::from(g.size()));
        if let Some(b) = beta {
            map.insert("beta".into(), Value::from(b));
        }
        if !g.params.is_empty() {
            map.insert(
                "params".into(),
                serde_json::to_value(&g.params).expect("params serialize"),
            );
        }
        self.game = Value::Object(map);
    }

    /// Adds a section with the given kind tag; the payload must serialize.
    pub fn push_section<T: serde::Serialize>(&mut self, kind: &str, payload: &T) -> Result<()> {
        let mut value = serde_json::to_value(payload)
            .map_err(|e| Error::Numerical(format!("section serialization: {e}")))?;
        if let Value::Object(map) = &mut value {
            map.insert("kind".into(), Value::String(kind.into()));
        } else {
            let mut map = Map::new();
            map.insert("kind".into(), Value::String(kind.into()));
            map.insert("value".into(), value);
            value = Value::Object(map);
        }
        self.sections.push(value);
        Ok(())
    }

    pub fn record_timing(&mut self, label: &str, ms: f64) {
        self.timings_ms.push((label.to_string(), ms));
    }

    /// The reproducible part of the report: game plus sections, canonical
    /// reals, no timings.
    pub fn payload(&self) -> Value {
        let mut map = Map::new();
        map.insert("game".into(), self.game.clone());
        map.insert("sections".into(), Value::Array(self.sections.clone()));
        let mut value = Value::Object(map);
        canonicalize_reals(&mut value);
        value
    }

    pub fn finish(self) -> Value {
        let mut meta = Map::new();
        meta.insert(
            "tool".into(),
            Value::String(format!("metastab {}", env!("CARGO_PKG_VERSION"))),
        );
        meta.insert(
            "command".into(),
            Value::from(self.command.clone()),
        );
        let mut timings = Map::new();
        for (label, ms) in &self.timings_ms {
            timings.insert(label.clone(), Value::from(*ms));
        }
        meta.insert("timings_ms".into(), Value::Object(timings));
        let payload = self.payload();
        let mut map = Map::new();
        map.insert("meta".into(), Value::Object(meta));
        if let Value::Object(p) = payload {
            for (k, v) in p {
                map.insert(k, v);
            }
        }
        Value::Object(map)
    }
}

/// Writes `content` to `path` atomically (temp file + rename), or to stdout
/// when no path is given.
pub fn emit(path: Option<&std::path::Path>, content: &str) -> Result<()> {
    match path {
        None => {
            println!("{content}");
            Ok(())
        }
        Some(p) => {
            let tmp = p.with_extension("tmp");
            std::fs::write(&tmp, content)
                .and_then(|_| std::fs::rename(&tmp, p))
                .map_err(|e| Error::invalid(format!("cannot write {}: {e}", p.display())))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_become_seventeen_digit_decimals() {
        let mut v = serde_json::json!({"x": 0.1, "y": [1.5, 2], "nested": {"z": 1.0/3.0}});
        canonicalize_reals(&mut v);
        let text = serde_json::to_string(&v).unwrap();
        assert!(text.contains("1.0000000000000001e-1"), "{text}");
        assert!(text.contains("3.3333333333333331e-1"), "{text}");
        // 17 significant digits; integers stay integers
        assert!(text.contains("1.5000000000000000e"), "{text}");
        assert!(text.contains(",2]"), "{text}");
        // and the decimals round-trip to the same double
        let back: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back["x"].as_f64().unwrap(), 0.1);
    }

    #[test]
    fn payload_excludes_timings() {
        let mut rb = ReportBuilder::new(vec!["metastab".into(), "test".into()]);
        rb.record_timing("build", 12.5);
        rb.push_section("demo", &serde_json::json!({"a": 1.25})).unwrap();
        let payload = serde_json::to_string(&rb.payload()).unwrap();
        assert!(!payload.contains("timings"));
        let full = serde_json::to_string(&rb.finish()).unwrap();
        assert!(full.contains("timings_ms"));
    }
}
