//! Experiment configuration: one JSON document with a default for every
//! field, plus dotted `key=value` overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::agent::AgentConfig;
use crate::battery::BatteryConfig;
use crate::customer::CustomerProfile;
use crate::env::{ActionGrid, EnvConfig, HOURS_PER_YEAR};
use crate::error::ConfigError;
use crate::lab::LabError;
use crate::market::{ProviderConfig, WeightConfig};
use crate::profile::{build_customers, DatasetConfig};

/// Everything about the environment except the customer profiles, which
/// come from the dataset section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSettings {
    pub battery: BatteryConfig,
    pub provider: ProviderConfig,
    pub weights: WeightConfig,
    pub grid: ActionGrid,
    pub episode_length: usize,
    pub demand_scale: Option<f64>,
    pub start_hour: usize,
}

impl Default for EnvSettings {
    fn default() -> Self {
        Self {
            battery: BatteryConfig::default(),
            provider: ProviderConfig::default(),
            weights: WeightConfig::default(),
            grid: ActionGrid::default(),
            episode_length: HOURS_PER_YEAR,
            demand_scale: None,
            start_hour: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// `(alpha, beta)` pairs for the weight sweep.
    pub weight_grid: Vec<(f64, f64)>,
    pub capacities: Vec<f64>,
    /// Weights used by the capacity sweep.
    pub battery_weights: WeightConfig,
    pub consumer_fractions: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            weight_grid: vec![
                (0.2, 0.6),
                (0.2, 0.2),
                (0.6, 0.2),
                (0.3, 0.3),
                (0.3, 0.5),
                (0.5, 0.3),
                (0.5, 0.2),
                (0.4, 0.4),
                (0.1, 0.7),
                (0.7, 0.1),
            ],
            capacities: vec![10.0, 20.0, 30.0, 40.0, 50.0],
            battery_weights: WeightConfig { alpha: 0.2, beta: 0.2 },
            consumer_fractions: vec![0.3, 0.5, 0.7, 0.9],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run_id: String,
    pub output_dir: String,
    pub seeds: Vec<u64>,
    pub env: EnvSettings,
    pub agent: AgentConfig,
    pub dataset: DatasetConfig,
    pub sweep: SweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            run_id: "baseline".into(),
            output_dir: "runs".into(),
            seeds: vec![0, 1, 2],
            env: EnvSettings::default(),
            agent: AgentConfig::default(),
            dataset: DatasetConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Defaults, then the optional file, then each `key=value` override.
    /// Unknown keys from either source are collected and reported together.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, LabError> {
        let defaults = serde_json::to_value(Self::default()).expect("config serializes");
        let mut merged = defaults.clone();
        let mut unknown = Vec::new();

        if let Some(p) = path {
            let text = std::fs::read_to_string(p).map_err(|source| LabError::Io {
                path: p.to_path_buf(),
                source,
            })?;
            let doc: Value =
                serde_json::from_str(&text).map_err(|e| ConfigError::Invalid(format!("{}: {e}", p.display())))?;
            collect_unknown(&defaults, &doc, "", &mut unknown);
            merge(&mut merged, doc);
        }

        for raw in overrides {
            let (key, value) = raw
                .split_once('=')
                .ok_or_else(|| ConfigError::Invalid(format!("override `{raw}` is not key=value")))?;
            let key = key.trim();
            if lookup(&defaults, key).is_none() {
                unknown.push(key.to_string());
                continue;
            }
            let value = serde_json::from_str(value.trim()).unwrap_or_else(|_| Value::String(value.trim().to_string()));
            set_path(&mut merged, key, value);
        }

        if !unknown.is_empty() {
            return Err(ConfigError::UnknownKeys(unknown).into());
        }
        let cfg: Self = serde_json::from_value(merged).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.env.battery.validate()?;
        self.env.weights.validate()?;
        self.agent.validate()?;
        self.dataset.validate()?;
        if self.seeds.is_empty() {
            return Err(ConfigError::Invalid("seed list is empty".into()));
        }
        Ok(())
    }

    pub fn customers(&self) -> Result<Vec<CustomerProfile>, LabError> {
        Ok(build_customers(&self.dataset)?)
    }

    pub fn env_config(&self, customers: Vec<CustomerProfile>) -> EnvConfig {
        let s = &self.env;
        EnvConfig {
            customers,
            battery: s.battery.clone(),
            provider: s.provider.clone(),
            weights: s.weights,
            grid: s.grid.clone(),
            episode_length: s.episode_length,
            demand_scale: s.demand_scale,
            start_hour: s.start_hour,
        }
    }

    pub fn agent_config(&self, seed: u64) -> AgentConfig {
        AgentConfig {
            seed,
            ..self.agent.clone()
        }
    }
}

fn collect_unknown(defaults: &Value, doc: &Value, prefix: &str, out: &mut Vec<String>) {
    let (Value::Object(known), Value::Object(given)) = (defaults, doc) else {
        return;
    };
    for (k, v) in given {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match known.get(k) {
            Some(d) => collect_unknown(d, v, &path, out),
            None => out.push(path),
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

fn lookup<'a>(v: &'a Value, dotted: &str) -> Option<&'a Value> {
    dotted.split('.').try_fold(v, |cur, k| cur.as_object()?.get(k))
}

fn set_path(v: &mut Value, dotted: &str, value: Value) {
    let mut cur = v;
    for k in dotted.split('.') {
        cur = cur
            .as_object_mut()
            .and_then(|o| o.get_mut(k))
            .expect("path checked against defaults");
    }
    *cur = value;
}
