//! `key = value` reconstruction config, one entry per line, `#` comments.
//! Keys are the field names of [`ReconConfig`]; `none` clears an optional.

use anyhow::{bail, Context};
use lps_core::ReconConfig;
use serde_json::{Map, Number, Value};

fn parse_value(raw: &str) -> Value {
    match raw {
        "true" => Value::Bool(true),
        "false" => Value::Bool(false),
        "none" => Value::Null,
        _ => {
            if let Ok(i) = raw.parse::<u64>() {
                Value::Number(i.into())
            } else if let Some(n) = raw.parse::<f64>().ok().and_then(Number::from_f64) {
                Value::Number(n)
            } else {
                Value::String(raw.to_string())
            }
        }
    }
}

pub fn parse_config(text: &str) -> anyhow::Result<ReconConfig> {
    let known = match serde_json::to_value(ReconConfig::default())? {
        Value::Object(m) => m,
        _ => unreachable!("ReconConfig serializes to an object"),
    };
    let mut entries = Map::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("line {}: expected key = value", lineno + 1);
        };
        let key = key.trim();
        if !known.contains_key(key) {
            bail!("line {}: unknown key {key:?}", lineno + 1);
        }
        if entries.insert(key.to_string(), parse_value(value.trim())).is_some() {
            bail!("line {}: duplicate key {key:?}", lineno + 1);
        }
    }
    let cfg: ReconConfig = serde_json::from_value(Value::Object(entries)).context("invalid config value")?;
    cfg.validate()?;
    Ok(cfg)
}
