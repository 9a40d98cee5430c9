//! Layered configuration: built-in defaults, then an optional file, then
//! command-line overrides.
//!
//! A config file is either a JSON object or `key = value` lines with dotted
//! keys (`train.lr = 0.002`). `#` starts a comment. Values are parsed as JSON
//! when possible and taken as strings otherwise. The resolved configuration
//! is written next to every command's outputs as `config.json`.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

pub const RESOLVED_NAME: &str = "config.json";

fn parse_value(raw: &str) -> Value {
    let raw = raw.trim();
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Sets `path` (dotted) inside `root`, creating objects on the way.
pub fn set_path(root: &mut Value, path: &str, v: Value) -> Result<()> {
    let keys: Vec<&str> = path.split('.').map(str::trim).collect();
    if keys.iter().any(|k| k.is_empty()) {
        bail!("bad config key {path:?}");
    }
    let mut cur = root;
    for k in &keys[..keys.len() - 1] {
        if !cur.is_object() {
            bail!("config key {path:?}: {k:?} is not a table");
        }
        cur = cur.as_object_mut().unwrap().entry(k.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    match cur {
        Value::Object(m) => {
            m.insert(keys[keys.len() - 1].to_string(), v);
            Ok(())
        }
        _ => bail!("config key {path:?}: parent is not a table"),
    }
}

/// Recursive merge; objects merge key by key, everything else replaces.
pub fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Parses `key=value` lines into a nested object.
pub fn parse_kv(text: &str) -> Result<Value> {
    let mut root = Value::Object(Map::new());
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("line {}: expected key = value", i + 1);
        };
        set_path(&mut root, k, parse_value(v)).with_context(|| format!("line {}", i + 1))?;
    }
    Ok(root)
}

pub fn read_file(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot open {}", path.display()))?;
    if text.trim_start().starts_with('{') {
        serde_json::from_str(&text).with_context(|| format!("{}: invalid JSON", path.display()))
    } else {
        parse_kv(&text).with_context(|| format!("{}", path.display()))
    }
}

/// `defaults ← file ← overrides`. Unknown keys are rejected when the target
/// type denies them.
pub fn resolve<T: Serialize + DeserializeOwned>(
    defaults: &T,
    file: Option<&Path>,
    overrides: &[(String, Value)],
) -> Result<T> {
    let mut v = serde_json::to_value(defaults)?;
    if let Some(p) = file {
        merge(&mut v, read_file(p)?);
    }
    for (k, val) in overrides {
        set_path(&mut v, k, val.clone())?;
    }
    serde_json::from_value(v).context("invalid configuration")
}

/// Parses a `--set key=value` argument.
pub fn parse_set(s: &str) -> Result<(String, Value), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got {s:?}"))?;
    Ok((k.trim().to_string(), parse_value(v)))
}

pub fn persist<T: Serialize>(cfg: &T, dir: &Path) -> Result<()> {
    let p = dir.join(RESOLVED_NAME);
    let text = serde_json::to_string_pretty(cfg)?;
    std::fs::write(&p, text + "\n").with_context(|| format!("cannot write {}", p.display()))
}
