//! Run configuration: defaults, then an optional JSON file, then flag
//! overrides addressed by dotted paths.

use std::path::{Path, PathBuf};

use lru_core::init::RingConfig;
use lru_core::model::ModelConfig;
use lru_core::training::OptimConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::failure::Failure;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskSection {
    /// Must match the subcommand when set.
    pub name: Option<String>,
    pub params: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// `model.ring` is always copied from the top-level `ring`.
    pub model: ModelConfig,
    pub ring: RingConfig,
    pub optim: OptimConfig,
    pub task: TaskSection,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            ring: RingConfig::default(),
            optim: OptimConfig::adam(1e-3, 2000),
            task: TaskSection {
                name: None,
                params: Value::Object(Map::new()),
            },
            seed: 0,
            output_dir: PathBuf::from("results"),
            threads: None,
        }
    }
}

/// A dotted-path override such as `ring.r_max = 0.99`.
#[derive(Clone, Debug, PartialEq)]
pub struct Override {
    pub path: String,
    pub value: Value,
}

impl Override {
    /// Parses `raw` as JSON, falling back to a plain string.
    pub fn parse(path: &str, raw: &str) -> Self {
        Self {
            path: path.to_string(),
            value: serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string())),
        }
    }
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), Failure> {
    let mut node = root;
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(Failure::Validation(format!("malformed override path `{path}`")));
    }
    let (last, parents) = segments.split_last().expect("split yields at least one segment");
    for seg in parents {
        let map = node
            .as_object_mut()
            .ok_or_else(|| Failure::Validation(format!("override `{path}`: `{seg}` is not inside an object")))?;
        node = map.entry(seg.to_string()).or_insert_with(|| Value::Object(Map::new()));
        if node.is_null() {
            *node = Value::Object(Map::new());
        }
    }
    let map = node
        .as_object_mut()
        .ok_or_else(|| Failure::Validation(format!("override `{path}`: parent is not an object")))?;
    match map.get_mut(*last) {
        Some(slot) => merge(slot, value),
        None => {
            map.insert(last.to_string(), value);
        }
    }
    Ok(())
}

/// Drops `model.ring` from the merged document, which must agree with the
/// top-level `ring` (as it does in a config echo).
fn take_model_ring(merged: &mut Value) -> Result<(), Failure> {
    let Some(model) = merged.get_mut("model").and_then(Value::as_object_mut) else {
        return Ok(());
    };
    let Some(inner) = model.remove("ring") else {
        return Ok(());
    };
    let decode =
        |v: Value| serde_json::from_value::<RingConfig>(v).map_err(|e| Failure::Validation(format!("ring: {e}")));
    let inner = decode(inner)?;
    let outer = decode(merged.get("ring").cloned().unwrap_or(Value::Null))?;
    if inner != outer {
        return Err(Failure::Validation(
            "config file: `model.ring` differs from `ring`; set the ring in the top-level `ring` section".into(),
        ));
    }
    Ok(())
}

pub fn read_file(path: &Path) -> Result<Value, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Validation(format!("cannot read config {}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text)
        .map_err(|e| Failure::Validation(format!("config {} is not valid JSON: {e}", path.display())))?;
    if !v.is_object() {
        return Err(Failure::Validation(format!(
            "config {} must be a JSON object with sections model, ring, optim, task, seed, output_dir, threads",
            path.display()
        )));
    }
    Ok(v)
}

/// Applies defaults, the file and the overrides in that order.
pub fn resolve(subcommand: &str, file: Option<Value>, overrides: &[Override]) -> Result<RunConfig, Failure> {
    let mut v = serde_json::to_value(RunConfig::default()).map_err(|e| Failure::Validation(e.to_string()))?;
    take_model_ring(&mut v)?;
    if let Some(f) = file {
        merge(&mut v, f);
        take_model_ring(&mut v)?;
    }
    for o in overrides {
        if o.path == "model.ring" || o.path.starts_with("model.ring.") {
            return Err(Failure::Validation(format!(
                "override `{}`: use `ring.*` instead of `model.ring.*`",
                o.path
            )));
        }
        set_path(&mut v, &o.path, o.value.clone())?;
    }
    let mut cfg: RunConfig =
        serde_json::from_value(v).map_err(|e| Failure::Validation(format!("invalid config: {e}")))?;
    if let Some(name) = &cfg.task.name {
        if name != subcommand {
            return Err(Failure::Validation(format!(
                "config task `{name}` does not match subcommand `{subcommand}`"
            )));
        }
    }
    if cfg.task.params.is_null() {
        cfg.task.params = Value::Object(Map::new());
    }
    cfg.task.name = Some(subcommand.to_string());
    cfg.model.ring = cfg.ring;
    cfg.ring.validate()?;
    cfg.model.validate()?;
    cfg.optim.validate()?;
    if cfg.threads == Some(0) {
        return Err(Failure::Validation("threads must be >= 1".into()));
    }
    Ok(cfg)
}

impl RunConfig {
    /// Decodes `task.params` into the subcommand's parameter type and writes
    /// the fully defaulted value back for the config echo.
    pub fn task_params<P: DeserializeOwned + Serialize>(&mut self) -> Result<P, Failure> {
        let params: P = serde_json::from_value(self.task.params.clone())
            .map_err(|e| Failure::Validation(format!("invalid task.params: {e}")))?;
        self.task.params = serde_json::to_value(&params).map_err(|e| Failure::Validation(e.to_string()))?;
        Ok(params)
    }

    pub fn echo(&self) -> Value {
        serde_json::to_value(self).unwrap_or(Value::Null)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn precedence_is_flags_then_file_then_defaults() {
        let file = json!({"ring": {"r_min": 0.5, "r_max": 0.9}, "seed": 3});
        let overrides = [Override::parse("ring.r_max", "0.99")];
        let cfg = resolve("gain", Some(file), &overrides).unwrap();
        assert_eq!(cfg.ring.r_min, 0.5);
        assert_eq!(cfg.ring.r_max, 0.99);
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.model.ring, cfg.ring);
        assert_eq!(cfg.model.depth, ModelConfig::default().depth);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(resolve("gain", Some(json!({"rng": {}})), &[]).is_err());
        assert!(resolve("gain", None, &[Override::parse("ring.radius", "1")]).is_err());
        assert!(resolve("gain", None, &[Override::parse("model.ring.r_max", "0.5")]).is_err());
        assert!(resolve("gain", Some(json!({"task": {"name": "spectrum"}})), &[]).is_err());
        let clash = json!({"ring": {"r_min": 0.5, "r_max": 0.9}, "model": {"ring": {"r_min": 0.1, "r_max": 0.9}}});
        assert!(resolve("gain", Some(clash), &[]).is_err());
    }

    #[test]
    fn echoed_config_reloads() {
        let cfg = resolve("gain", None, &[Override::parse("ring.r_max", "0.9")]).unwrap();
        let again = resolve("gain", Some(cfg.echo()), &[]).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn overrides_create_nested_task_params() {
        let overrides = [
            Override::parse("task.params.data.len", "50"),
            Override::parse("task.params.mode", "constant"),
        ];
        let cfg = resolve("train-conv", None, &overrides).unwrap();
        assert_eq!(cfg.task.params, json!({"data": {"len": 50}, "mode": "constant"}));
    }

    #[test]
    fn task_params_are_defaulted_for_echo() {
        #[derive(Debug, Serialize, Deserialize)]
        #[serde(deny_unknown_fields, default)]
        struct P {
            a: u32,
            b: f64,
        }
        impl Default for P {
            fn default() -> Self {
                Self { a: 7, b: 0.5 }
            }
        }
        let mut cfg = resolve("x", None, &[Override::parse("task.params.b", "2")]).unwrap();
        let p: P = cfg.task_params().unwrap();
        assert_eq!((p.a, p.b), (7, 2.0));
        assert_eq!(cfg.echo()["task"]["params"], json!({"a": 7, "b": 2.0}));
        let mut bad = resolve("x", None, &[Override::parse("task.params.c", "1")]).unwrap();
        assert!(bad.task_params::<P>().is_err());
    }

    #[test]
    fn string_values_fall_back_to_strings() {
        assert_eq!(Override::parse("a", "constant").value, json!("constant"));
        assert_eq!(Override::parse("a", "[0.9, 0.99]").value, json!([0.9, 0.99]));
    }
}
