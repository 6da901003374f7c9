//! Flat `key = value` configuration files.
//!
//! Any serializable config flattens to dotted keys (`adam.lr = 0.001`).
//! Values are JSON literals, with bare words read as strings and `none`
//! as an absent option. Overrides layer in the order file, environment
//! (`MGU_` prefix, dots written as `__`: `MGU_ADAM__LR=1e-3`), flags.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

pub const ENV_PREFIX: &str = "MGU_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad value for {key}: {reason}")]
    Value { key: String, reason: String },
    #[error("cannot read config {path}: {source}")]
    Read { path: String, source: std::io::Error },
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(m) if !m.is_empty() => {
            for (k, child) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, child, out);
            }
        }
        Value::Null => out.push((prefix.to_string(), "none".into())),
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// Flattened `(key, value)` pairs in serialization order.
pub fn to_pairs<T: Serialize>(config: &T) -> Vec<(String, String)> {
    let mut out = Vec::new();
    flatten("", &serde_json::to_value(config).expect("configs serialize"), &mut out);
    out
}

/// The text form read back by [`parse_kv`].
pub fn to_kv<T: Serialize>(config: &T) -> String {
    to_pairs(config).into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            });
        };
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_kv(path: &Path) -> Result<Vec<(String, String)>, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.display().to_string(),
        source,
    })?;
    parse_kv(&text)
}

/// Overrides from `MGU_*` variables among `vars`, keyed by the config keys
/// of `config`. Unrelated variables are ignored.
pub fn env_pairs<T: Serialize>(config: &T, vars: impl IntoIterator<Item = (String, String)>) -> Vec<(String, String)> {
    let keys: Vec<String> = to_pairs(config).into_iter().map(|(k, _)| k).collect();
    let mut out: Vec<(String, String)> = vars
        .into_iter()
        .filter_map(|(name, value)| {
            let rest = name.strip_prefix(ENV_PREFIX)?.to_ascii_lowercase().replace("__", ".");
            keys.iter().find(|k| **k == rest).map(|k| (k.clone(), value))
        })
        .collect();
    out.sort();
    out
}

fn parse_value(s: &str) -> Value {
    if s == "none" {
        return Value::Null;
    }
    serde_json::from_str(s).unwrap_or_else(|_| Value::String(s.to_string()))
}

fn set(root: &mut Value, key: &str, value: Value) -> Result<(), ConfigError> {
    let unknown = || ConfigError::UnknownKey(key.to_string());
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj: &mut Map<String, Value> = node.as_object_mut().ok_or_else(unknown)?;
        let last = i + 1 == parts.len();
        if last {
            // tagged variants may gain fields when their `kind` changes
            if !obj.contains_key(*part) && !obj.contains_key("kind") {
                return Err(unknown());
            }
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.get_mut(*part).ok_or_else(unknown)?;
    }
    Err(unknown())
}

fn set_all(root: &mut Value, pairs: &[(String, String)]) -> Result<(), ConfigError> {
    for (k, v) in pairs {
        let mut value = parse_value(v);
        // numbers typed where a string is expected stay strings
        if let Some(Value::String(_)) = root.pointer(&format!("/{}", k.replace('.', "/"))) {
            if !value.is_string() && !value.is_null() {
                value = Value::String(v.clone());
            }
        }
        set(root, k, value)?;
    }
    Ok(())
}

/// Applies `pairs` in order on top of `base`.
pub fn apply<T: Serialize + DeserializeOwned>(base: &T, pairs: &[(String, String)]) -> Result<T, ConfigError> {
    let start = serde_json::to_value(base).expect("configs serialize");
    let mut root = start.clone();
    set_all(&mut root, pairs)?;
    serde_json::from_value(root).map_err(|e| {
        // blame the first key that is invalid on its own
        let key = pairs
            .iter()
            .find(|p| {
                let mut r = start.clone();
                set_all(&mut r, std::slice::from_ref(*p)).is_ok() && serde_json::from_value::<T>(r).is_err()
            })
            .map_or_else(|| "<config>".to_string(), |p| p.0.clone());
        ConfigError::Value {
            key,
            reason: e.to_string(),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::FeatureTransform;
    use crate::trainer::TrainConfig;

    #[test]
    fn text_round_trip() {
        let c = TrainConfig::desk();
        let text = to_kv(&c);
        assert!(text.contains("adam.lr = 0.001\n"));
        assert!(text.contains("early_stop_patience = 20\n"));
        assert!(text.contains("discriminator.dense = [50,10]\n"));
        let back: TrainConfig = apply(&TrainConfig::default(), &parse_kv(&text).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn overrides_layer_in_order() {
        let file = parse_kv("# desk run\nepochs = 7\nrecon_weight = 0.6  # dereverb\n").unwrap();
        let env = env_pairs(
            &TrainConfig::default(),
            [
                ("MGU_EPOCHS".to_string(), "9".to_string()),
                ("MGU_ADAM__LR".to_string(), "0.001".to_string()),
                ("HOME".to_string(), "/root".to_string()),
            ],
        );
        let flags = vec![("epochs".to_string(), "11".to_string())];
        let layers: Vec<_> = file.into_iter().chain(env).chain(flags).collect();
        let c: TrainConfig = apply(&TrainConfig::default(), &layers).unwrap();
        assert_eq!((c.epochs, c.recon_weight, c.adam.lr), (11, 0.6, 0.001));
    }

    #[test]
    fn options_and_tagged_variants() {
        let pairs = parse_kv("early_stop_patience = none\nfeatures.kind = log1p\nd_steps_per_epoch = 3").unwrap();
        let c: TrainConfig = apply(&TrainConfig::default(), &pairs).unwrap();
        assert_eq!(c.early_stop_patience, None);
        assert_eq!(c.features, FeatureTransform::Log1p);
        assert_eq!(c.d_steps_per_epoch, Some(3));
        let c: TrainConfig = apply(&c, &parse_kv("features.kind = power_law\nfeatures.exponent = 0.5").unwrap()).unwrap();
        assert_eq!(c.features, FeatureTransform::PowerLaw { exponent: 0.5 });
    }

    #[test]
    fn errors_name_the_key() {
        let d = TrainConfig::default();
        let e = apply(&d, &parse_kv("adam.lrr = 1").unwrap()).unwrap_err();
        assert!(matches!(e, ConfigError::UnknownKey(k) if k == "adam.lrr"));
        let e = apply(&d, &parse_kv("epochs = many").unwrap()).unwrap_err();
        assert!(e.to_string().contains("epochs"));
        assert!(matches!(parse_kv("a = 1\njunk"), Err(ConfigError::Syntax { line: 2, .. })));
    }
}
