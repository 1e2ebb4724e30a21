//! Configuration files and run manifests.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use sbcb_core::divergence::PsiFamily;
use sbcb_core::env::{RewardFamily, StateOrder};
use sbcb_core::montecarlo::SweepConfig;

use crate::CliError;

/// Reads a TOML config over `defaults`. A `[manifest]` table, as written next
/// to every run's outputs, is ignored so manifests can be passed back in.
pub fn load<T: Serialize + DeserializeOwned>(path: Option<&Path>, defaults: T) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(defaults);
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut given: toml::Table = text
        .parse()
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    given.remove("manifest");
    let mut table = toml::Table::try_from(&defaults).map_err(|e| CliError::Runtime(format!("cannot serialize defaults: {e}")))?;
    merge(&mut table, given);
    table
        .try_into()
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            // Tagged enums (`kind = ...`) are replaced whole.
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if !o.contains_key("kind") => merge(b, o),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

/// Default sweep for `sr-compare`: the tightness generator at 1,000 environments.
pub fn sr_compare_default() -> SweepConfig {
    SweepConfig {
        num_envs: 1000,
        ..SweepConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegretConfig {
    /// Local means `m_{i,s}`, one row per arm.
    pub means: Vec<Vec<f64>>,
    /// Prior variance stored with the environment; does not enter the regret.
    pub sigma2: f64,
    pub state_order: StateOrder,
    pub alpha: f64,
    pub family: PsiFamily,
    pub reward_family: RewardFamily,
    pub checkpoints: Vec<usize>,
    pub runs: usize,
    pub master_seed: u64,
}

impl Default for RegretConfig {
    fn default() -> Self {
        Self {
            means: vec![vec![0.9, 0.3], vec![0.6, 0.8], vec![0.4, 0.5]],
            sigma2: 0.05,
            state_order: StateOrder::Iid,
            alpha: 3.0,
            family: PsiFamily::BoundedUnit,
            reward_family: RewardFamily::Bernoulli,
            checkpoints: vec![100, 1000, 10_000],
            runs: 1000,
            master_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Random environments in the bound-validity suites.
    pub envs: usize,
    pub runs: usize,
    /// Seeded trials in the reduction, enumeration and transcript suites.
    pub trials: usize,
    pub master_seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            envs: 20,
            runs: 200,
            trials: 20,
            master_seed: 0,
        }
    }
}

/// Writes `config` followed by a `[manifest]` table describing the run.
pub fn write_manifest<T: Serialize>(dir: &Path, config: &T, manifest: toml::Table) -> Result<(), CliError> {
    let mut table = toml::Table::try_from(config).map_err(|e| CliError::Runtime(format!("cannot serialize config: {e}")))?;
    table.insert("manifest".into(), toml::Value::Table(manifest));
    let text = toml::to_string(&table).map_err(|e| CliError::Runtime(format!("cannot serialize manifest: {e}")))?;
    fs::write(dir.join("manifest.toml"), text).map_err(|e| CliError::Runtime(format!("cannot write manifest: {e}")))
}
