//! JSON run configurations.
//!
//! A configuration is resolved from three layers: built-in defaults, a JSON file, and
//! command-line overrides given as dotted keys (`optimizer.gamma0=0.01`). `PLRF_SEED` sits
//! between the file and the flags. A run manifest is accepted wherever a config is, in which
//! case its `config` member is used.

use std::path::Path;

use plrf_core::sampler::SamplerKind;
use plrf_core::{OptimizerConfig, PlrfParams};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::RunError;

pub const SEED_ENV: &str = "PLRF_SEED";

fn one() -> usize {
    1
}

fn default_ratio() -> f64 {
    PlrfParams::DEFAULT_RATIO
}

fn default_per_decade() -> usize {
    plrf_core::trajectory::RecordingGrid::DEFAULT_PER_DECADE
}

fn default_cap() -> usize {
    plrf_core::trajectory::RecordingGrid::DEFAULT_CAP
}

/// Configuration of `plrf trajectory` and `plrf ode`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub alpha: f64,
    pub beta: f64,
    pub model_size: usize,
    /// Ambient dimension `d`; defaults to `ratio_d_over_m · M`.
    #[serde(default)]
    pub ambient_dim: Option<usize>,
    #[serde(default = "default_ratio")]
    pub ratio_d_over_m: f64,
    pub steps: u64,
    #[serde(default = "one")]
    pub n_seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub sampler: SamplerKind,
    /// Also integrate the ODE on the same instances.
    #[serde(default)]
    pub ode: bool,
    #[serde(default = "default_per_decade")]
    pub grid_per_decade: usize,
    #[serde(default = "default_cap")]
    pub grid_cap: usize,
}

impl TrajectoryConfig {
    pub fn params(&self, seed: u64) -> PlrfParams {
        let mut p = PlrfParams::with_ratio(self.alpha, self.beta, self.model_size, self.ratio_d_over_m, seed);
        if let Some(d) = self.ambient_dim {
            p.ambient_dim = d;
        }
        p
    }

    pub fn validate(&self) -> Result<(), RunError> {
        self.params(0).validate()?;
        self.optimizer.validate()?;
        if self.steps == 0 {
            return Err(RunError::config("steps must be at least 1"));
        }
        if self.n_seeds == 0 {
            return Err(RunError::config("n_seeds must be at least 1"));
        }
        if self.grid_per_decade == 0 || self.grid_cap < 2 {
            return Err(RunError::config("recording grid needs grid_per_decade >= 1 and grid_cap >= 2"));
        }
        Ok(())
    }
}

/// Reads a JSON document. A manifest (an object with `command` and `config`) yields its config.
pub fn load_document(path: &Path) -> Result<Value, RunError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| RunError::config(format!("cannot read {}: {e}", path.display())))?;
    let doc: Value = serde_json::from_str(&text)
        .map_err(|e| RunError::config(format!("{}: {e}", path.display())))?;
    Ok(unwrap_manifest(doc))
}

pub fn unwrap_manifest(doc: Value) -> Value {
    match doc {
        Value::Object(mut map) if map.contains_key("command") && map.contains_key("config") => {
            map.remove("config").unwrap_or(Value::Null)
        }
        other => other,
    }
}

/// Parses a flag value as JSON, falling back to a plain string.
pub fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Sets `a.b.c` inside `doc`, creating intermediate objects.
pub fn set_key(doc: &mut Value, dotted: &str, value: Value) -> Result<(), RunError> {
    if !doc.is_object() {
        *doc = Value::Object(Map::new());
    }
    let mut cur = doc;
    let mut parts = dotted.split('.').peekable();
    while let Some(part) = parts.next() {
        if part.is_empty() {
            return Err(RunError::config(format!("malformed key {dotted:?}")));
        }
        let map = cur
            .as_object_mut()
            .ok_or_else(|| RunError::config(format!("{dotted}: parent is not an object")))?;
        if parts.peek().is_none() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        cur = map.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    Ok(())
}

/// Parses `key=value` override strings.
pub fn parse_override(s: &str) -> Result<(String, Value), RunError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| RunError::config(format!("override {s:?} is not key=value")))?;
    Ok((k.trim().to_string(), parse_value(v.trim())))
}

/// Layers a file, the seed environment variable and explicit overrides, then deserializes.
pub fn resolve<T: DeserializeOwned>(
    file: Option<&Path>,
    seed_key: &str,
    env_seed: Option<&str>,
    overrides: &[(String, Value)],
) -> Result<(T, Value), RunError> {
    let mut doc = match file {
        Some(p) => load_document(p)?,
        None => Value::Object(Map::new()),
    };
    if let Some(raw) = env_seed {
        let seed: u64 = raw
            .trim()
            .parse()
            .map_err(|_| RunError::config(format!("{SEED_ENV}={raw:?} is not an unsigned integer")))?;
        set_key(&mut doc, seed_key, Value::from(seed))?;
    }
    for (k, v) in overrides {
        set_key(&mut doc, k, v.clone())?;
    }
    let cfg: T = serde_json::from_value(doc.clone()).map_err(|e| RunError::config(e.to_string()))?;
    Ok((cfg, doc))
}

pub fn env_seed() -> Option<String> {
    std::env::var(SEED_ENV).ok().filter(|s| !s.is_empty())
}
