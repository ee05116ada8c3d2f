//! Experiment and sweep configuration.
//!
//! Both are TOML documents. Unknown keys are rejected at every level, and
//! every field not given takes the documented default, so a file with only
//! `env` and `algorithm` reproduces the reference hyperparameters.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use wac_core::agents::{AgentConfig, Algorithm, TrainConfig};
use wac_core::envs::EnvConfig;

use crate::error::{HarnessError, Result};

/// Overrides the root that relative output directories are resolved against.
pub const OUTPUT_ROOT_VAR: &str = "WAC_OUTPUT_ROOT";

fn default_epochs() -> usize {
    100
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

fn default_algorithm() -> Algorithm {
    Algorithm::OeWac
}

fn yes() -> bool {
    true
}

/// One experiment: a single environment and algorithm over several seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `lqg`, `riverswim`, `point1`..`point4`, optionally with `-sparse`.
    pub env: String,
    /// Fields replacing the named environment's defaults.
    #[serde(default)]
    pub env_overrides: toml::Table,
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Defaults to `runs/<env>-<algorithm>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Save the final trainer state of every seed.
    #[serde(default = "yes")]
    pub checkpoint: bool,
}

impl ExperimentConfig {
    /// Defaults for `env` and `algorithm`.
    pub fn new(env: &str, algorithm: Algorithm) -> Self {
        Self {
            env: env.to_string(),
            env_overrides: toml::Table::new(),
            algorithm,
            agent: AgentConfig { algorithm, ..AgentConfig::default() },
            train: TrainConfig::default(),
            epochs: default_epochs(),
            seeds: default_seeds(),
            output: None,
            checkpoint: true,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        if let Some(agent) = table.get("agent").and_then(|a| a.as_table()) {
            if agent.contains_key("algorithm") {
                return Err(HarnessError::Config("set `algorithm` at the top level, not under [agent]".into()));
            }
        }
        let mut cfg: Self = table.try_into().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        cfg.agent.algorithm = cfg.algorithm;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Environment config after applying `env_overrides`.
    pub fn env_config(&self) -> Result<EnvConfig> {
        let base = EnvConfig::by_name(&self.env).map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.env_overrides.is_empty() {
            return Ok(base);
        }
        if self.env_overrides.contains_key("kind") {
            return Err(HarnessError::Config("env_overrides cannot change the environment kind".into()));
        }
        let mut value = serde_json::to_value(&base).expect("env config serializes");
        let obj = value.as_object_mut().expect("tagged env config is an object");
        for (k, v) in &self.env_overrides {
            obj.insert(k.clone(), serde_json::to_value(v).expect("toml value converts"));
        }
        serde_json::from_value(value).map_err(|e| HarnessError::Config(format!("env_overrides: {e}")))
    }

    /// Checks every field before anything runs.
    pub fn validate(&self) -> Result<()> {
        let cfg = |e: wac_core::Error| HarnessError::Config(e.to_string());
        if self.epochs == 0 {
            return Err(HarnessError::Config("epochs must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("seeds must not be empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(HarnessError::Config("seeds must be distinct".into()));
        }
        if self.agent.algorithm != self.algorithm {
            return Err(HarnessError::Config("agent algorithm disagrees with `algorithm`".into()));
        }
        self.agent.validate().map_err(cfg)?;
        self.train.validate().map_err(cfg)?;
        let env = self.env_config()?;
        env.build().map_err(cfg)?;
        Ok(())
    }

    /// Output directory, under `$WAC_OUTPUT_ROOT` when that is set and the
    /// configured path is relative.
    pub fn output_dir(&self) -> PathBuf {
        let dir = self.configured_output();
        match std::env::var_os(OUTPUT_ROOT_VAR) {
            Some(root) if dir.is_relative() => PathBuf::from(root).join(dir),
            _ => dir,
        }
    }

    fn configured_output(&self) -> PathBuf {
        self.output
            .clone()
            .unwrap_or_else(|| PathBuf::from("runs").join(format!("{}-{}", self.env, self.algorithm.name())))
    }

    /// Sets a field by dotted path (`agent.wac.lambda`) or alias (`lambda`).
    /// `value` is parsed as a TOML value and falls back to a bare string.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        self.set_value(key, parse_value(value))
    }

    pub fn set_value(&mut self, key: &str, value: Value) -> Result<()> {
        let path = resolve_alias(key);
        let mut doc = serde_json::to_value(&*self).expect("config serializes");
        let mut node = &mut doc;
        let parts: Vec<&str> = path.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let obj = node
                .as_object_mut()
                .ok_or_else(|| HarnessError::Config(format!("`{key}`: `{}` is not a table", parts[..i].join("."))))?;
            if i + 1 == parts.len() {
                obj.insert(part.to_string(), value.clone());
                break;
            }
            node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
        }
        if path == "algorithm" {
            doc["agent"]["algorithm"] = value;
        }
        let mut updated: Self =
            serde_json::from_value(doc).map_err(|e| HarnessError::Config(format!("`{key}`: {e}")))?;
        updated.agent.algorithm = updated.algorithm;
        *self = updated;
        Ok(())
    }
}

fn resolve_alias(key: &str) -> String {
    match key {
        "lambda" | "rho" | "delta" | "shared_trunk" => format!("agent.wac.{key}"),
        "beta_ub" => "agent.oac.beta_ub".into(),
        "delta_oac" => "agent.oac.delta".into(),
        "hidden" | "learning_rate" | "batch_size" | "tau" | "gamma" => format!("agent.{key}"),
        "explore_steps" | "train_steps" | "eval_window" | "replay_capacity" | "coverage_epsilon" | "coverage_bins" => {
            format!("train.{key}")
        }
        other => other.to_string(),
    }
}

fn parse_value(text: &str) -> Value {
    match toml::from_str::<toml::Table>(&format!("v = {text}")) {
        Ok(mut t) => serde_json::to_value(t.remove("v").expect("key present")).expect("toml value converts"),
        Err(_) => Value::String(text.to_string()),
    }
}

/// Base experiment plus named parameter grids, run as a cartesian product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: ExperimentConfig,
    /// Parameter name (alias or dotted path) to the values it takes.
    pub grid: BTreeMap<String, Vec<toml::Value>>,
}

/// One cell of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    /// Directory-safe name, e.g. `lambda=0.3_rho=0.6`.
    pub label: String,
    pub values: Vec<(String, String)>,
    pub config: ExperimentConfig,
}

impl SweepSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        let base = match table.remove("base") {
            Some(toml::Value::Table(t)) => {
                ExperimentConfig::from_toml_str(&toml::to_string(&t).expect("table serializes"))?
            }
            _ => return Err(HarnessError::Config("sweep needs a [base] table".into())),
        };
        let grid = match table.remove("grid") {
            Some(g) => g.try_into().map_err(|e: toml::de::Error| HarnessError::Config(format!("grid: {e}")))?,
            None => return Err(HarnessError::Config("sweep needs a [grid] table".into())),
        };
        if let Some(k) = table.keys().next() {
            return Err(HarnessError::Config(format!("unknown sweep key `{k}`")));
        }
        Ok(Self { base, grid })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn size(&self) -> usize {
        self.grid.values().map(Vec::len).product()
    }

    /// Every grid point, last parameter varying fastest. Each point's
    /// config is validated.
    pub fn points(&self) -> Result<Vec<GridPoint>> {
        if self.grid.values().any(Vec::is_empty) {
            return Err(HarnessError::Config("every grid parameter needs at least one value".into()));
        }
        let keys: Vec<&String> = self.grid.keys().collect();
        let base_dir = self.base.configured_output();
        let mut out = Vec::with_capacity(self.size());
        for flat in 0..self.size() {
            let mut rem = flat;
            let mut idx = vec![0; keys.len()];
            for (k, key) in keys.iter().enumerate().rev() {
                let n = self.grid[*key].len();
                idx[k] = rem % n;
                rem /= n;
            }
            let mut config = self.base.clone();
            let mut values = Vec::with_capacity(keys.len());
            for (key, &i) in keys.iter().zip(&idx) {
                let v = &self.grid[*key][i];
                config.set_value(key, serde_json::to_value(v).expect("toml value converts"))?;
                let shown = match v {
                    toml::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                values.push(((*key).clone(), shown));
            }
            let label = if values.is_empty() {
                "base".to_string()
            } else {
                values.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join("_")
            };
            config.output = Some(base_dir.join(&label));
            config.validate()?;
            out.push(GridPoint { label, values, config });
        }
        Ok(out)
    }
}
