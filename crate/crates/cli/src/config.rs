//! The run configuration: one TOML file, merged over the chosen presets.

use std::path::{Path, PathBuf};

use agebranch::estimate::{AgeGrid, Bandwidth};
use agebranch::experiment::{ExperimentConfig, EXPERIMENT_PRESETS};
use agebranch::manytoone::Identity;
use agebranch::tree::DEFAULT_NODE_CAP;
use agebranch::{Kernel, ModelSpec, TestFunction};
use serde::{Deserialize, Serialize};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelSpec,
    pub simulate: SimulateConfig,
    pub estimate: EstimateConfig,
    pub verify: VerifyConfig,
    /// Its `model` and `seed` are replaced by the top-level ones.
    pub experiment: ExperimentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            model: ModelSpec::default(),
            simulate: SimulateConfig::default(),
            estimate: EstimateConfig::default(),
            verify: VerifyConfig::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub horizon: f64,
    pub node_cap: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            horizon: 13.0,
            node_cap: DEFAULT_NODE_CAP,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateConfig {
    /// Tree dump to read; a fresh tree is simulated when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    pub horizon: f64,
    pub node_cap: usize,
    pub kernel: Kernel,
    pub bandwidth: Bandwidth,
    pub grid: AgeGrid,
    /// Also write the boundary density estimate.
    pub boundary_density: bool,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            input: None,
            horizon: 13.0,
            node_cap: DEFAULT_NODE_CAP,
            kernel: Kernel::Gaussian,
            bandwidth: Bandwidth::RuleOfThumb,
            grid: AgeGrid::default(),
            boundary_density: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub horizon: f64,
    pub n_trees: usize,
    pub n_paths: usize,
    pub grid_cells: usize,
    pub batches: usize,
    pub node_cap: usize,
    pub test_function: TestFunction,
    pub identities: Vec<Identity>,
    pub z_max: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            horizon: 8.0,
            n_trees: 2000,
            n_paths: 200_000,
            grid_cells: 256,
            batches: 40,
            node_cap: DEFAULT_NODE_CAP,
            test_function: TestFunction::One,
            identities: Identity::ALL.to_vec(),
            z_max: 3.0,
        }
    }
}

/// Configuration problems: reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    // Tagged enums are replaced whole, not merged field by field.
                    Some(slot) if slot.is_table() && v.is_table() && !is_tagged(&v) => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

fn is_tagged(v: &toml::Value) -> bool {
    v.as_table()
        .is_some_and(|t| t.contains_key("kind") || t.contains_key("rule"))
}

/// Build the configuration: defaults, then the preset, then the file,
/// then the seed override.
pub fn resolve(file: Option<&Path>, preset: Option<&str>, seed: Option<u64>) -> Result<RunConfig, UsageError> {
    let mut base = RunConfig::default();
    if let Some(name) = preset {
        if EXPERIMENT_PRESETS.contains(&name) {
            base.experiment = ExperimentConfig::preset(name).map_err(|e| UsageError(e.to_string()))?;
        } else {
            base.model = ModelSpec::preset(name).map_err(|e| UsageError(e.to_string()))?;
        }
    }
    let mut value = toml::Value::try_from(&base).map_err(|e| UsageError(format!("internal: {e}")))?;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let over: toml::Value = toml::from_str(&text)
            .map_err(|e| UsageError(format!("malformed config {}: {e}", path.display())))?;
        merge(&mut value, over);
    }
    let mut cfg: RunConfig = value
        .try_into()
        .map_err(|e: toml::de::Error| UsageError(format!("invalid config: {e}")))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.experiment.model = cfg.model.clone();
    cfg.experiment.seed = cfg.seed;
    Ok(cfg)
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
