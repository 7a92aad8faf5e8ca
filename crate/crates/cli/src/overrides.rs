//! Layered training configuration: preset, then JSON config file, then
//! dotted `key=value` overrides.

use std::fmt;

use hogs_core::scene::SkyboxConfig;
use hogs_core::TrainConfig;
use serde_json::{Map, Value};

/// Bad flags, keys or values. Maps to the usage exit code.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> UsageError {
    UsageError(msg.into())
}

/// Every settable key, with optional sections filled in so nested keys such
/// as `skybox.count` can be reached while the section is unset.
fn schema() -> Value {
    let full = TrainConfig {
        skybox: Some(SkyboxConfig::default()),
        world_prune_enabled: Some(false),
        ..TrainConfig::default()
    };
    serde_json::to_value(full).expect("config serializes")
}

fn valid_keys(schema: &Map<String, Value>) -> String {
    let mut keys: Vec<&str> = schema.keys().map(String::as_str).collect();
    keys.sort_unstable();
    keys.join(", ")
}

/// Writes `value` at the dotted `key`, creating unset sections from the
/// schema. Unknown keys fail with the list of valid keys at that level.
fn set_path(root: &mut Value, schema: &Value, key: &str, value: Value) -> Result<(), UsageError> {
    let parts: Vec<&str> = key.split('.').collect();
    let (mut node, mut shape) = (root, schema);
    for (depth, part) in parts.iter().enumerate() {
        let Value::Object(shape_map) = shape else {
            return Err(usage(format!("`{}` is not a section", parts[..depth].join("."))));
        };
        if !shape_map.contains_key(*part) {
            let prefix = if depth == 0 {
                "valid keys".to_string()
            } else {
                format!("valid keys under `{}`", parts[..depth].join("."))
            };
            return Err(usage(format!("unknown config key `{key}`; {prefix}: {}", valid_keys(shape_map))));
        }
        if node.is_null() {
            *node = shape.clone();
        }
        let map = node.as_object_mut().expect("sections are objects");
        if depth + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map.get_mut(*part).expect("present in schema and node");
        shape = &shape_map[*part];
    }
    Err(usage("empty config key"))
}

/// Leaf `(dotted key, value)` pairs of a config file. Sections known to the
/// schema are descended; everything else is a leaf.
fn flatten(prefix: &str, value: &Value, shape: Option<&Value>, out: &mut Vec<(String, Value)>) {
    match (value, shape) {
        (Value::Object(map), Some(Value::Object(shape_map))) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, shape_map.get(k), out);
            }
        }
        _ => out.push((prefix.to_string(), value.clone())),
    }
}

fn decode(value: &Value) -> Result<TrainConfig, serde_json::Error> {
    serde_json::from_value(value.clone())
}

/// Builds the effective config. `file` is the parsed JSON config file;
/// `sets` are `key=value` strings applied in order after it. Values are read
/// as JSON and fall back to plain strings, so `w_init=1/d` and
/// `parametrization=cartesian` need no quoting.
pub fn build_config(base: TrainConfig, file: Option<&Value>, sets: &[String]) -> Result<TrainConfig, UsageError> {
    let schema = schema();
    let mut root = serde_json::to_value(base).expect("config serializes");

    if let Some(file) = file {
        if !file.is_object() {
            return Err(usage("config file must hold a JSON object"));
        }
        let mut leaves = Vec::new();
        flatten("", file, Some(&schema), &mut leaves);
        for (key, value) in leaves {
            set_path(&mut root, &schema, &key, value)?;
        }
        decode(&root).map_err(|e| usage(format!("config file: {e}")))?;
    }

    for item in sets {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| usage(format!("override `{item}` is not of the form key=value")))?;
        let (key, raw) = (key.trim(), raw.trim());
        let parsed = serde_json::from_str::<Value>(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let is_string = parsed.is_string();
        set_path(&mut root, &schema, key, parsed)?;
        if let Err(first) = decode(&root) {
            if is_string {
                return Err(usage(format!("invalid value for `{key}`: {first}")));
            }
            set_path(&mut root, &schema, key, Value::String(raw.to_string()))?;
            decode(&root).map_err(|_| usage(format!("invalid value for `{key}`: {first}")))?;
        }
    }

    let config = decode(&root).map_err(|e| usage(e.to_string()))?;
    config.validate().map_err(|e| usage(e.to_string()))?;
    Ok(config)
}
