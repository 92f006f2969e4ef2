//! Run configuration: a flat JSON document plus command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CmdError;

fn default_q() -> u32 {
    1
}
fn default_sample_count() -> usize {
    200_000
}
fn default_probe_count() -> usize {
    10_000
}
fn default_k() -> u32 {
    8
}
fn default_sign_trials() -> u64 {
    256
}
fn default_rotation_trials() -> u64 {
    64
}
fn default_budget() -> usize {
    10
}
fn default_d_psi_max() -> u32 {
    12
}
fn default_epsilon_energy() -> f64 {
    1e-4
}

/// Every knob of every subcommand. Unknown keys in the JSON are errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_q")]
    pub q: u32,
    /// Required before any command runs, via file or `--seed`.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_sample_count")]
    pub sample_count: usize,
    #[serde(default = "default_probe_count")]
    pub probe_count: usize,
    #[serde(default = "default_k")]
    pub k: u32,
    #[serde(default = "default_sign_trials")]
    pub sign_trials: u64,
    #[serde(default = "default_rotation_trials")]
    pub rotation_trials: u64,
    #[serde(default = "default_budget")]
    pub budget: usize,
    /// Defaults to 5% of the boundary mass when absent.
    #[serde(default)]
    pub defect_target: Option<f64>,
    #[serde(default = "default_d_psi_max")]
    pub d_psi_max: u32,
    #[serde(default = "default_epsilon_energy")]
    pub epsilon_energy: f64,
    /// Where reports land; not echoed into the manifest, so runs into
    /// different directories stay byte-comparable.
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CmdError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CmdError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CmdError::Config(format!("bad config {}: {e}", path.display())))
    }

    /// Checks field ranges and the seed requirement; names the offending
    /// field in the error.
    pub fn validate(&self) -> Result<(), CmdError> {
        let positive: [(&str, bool); 7] = [
            ("q", self.q >= 1),
            ("sample_count", self.sample_count >= 1),
            ("probe_count", self.probe_count >= 1),
            ("k", self.k >= 1),
            ("budget", self.budget >= 1),
            ("epsilon_energy", self.epsilon_energy > 0.0),
            ("d_psi_max", true),
        ];
        for (field, ok) in positive {
            if !ok {
                return Err(CmdError::Config(format!("field `{field}` must be positive")));
            }
        }
        if let Some(target) = self.defect_target {
            let mass = f64::from(self.q);
            if !(target > 0.0 && target < mass) {
                return Err(CmdError::Config(format!(
                    "field `defect_target` must lie in (0, {mass}), got {target}"
                )));
            }
        }
        if self.seed.is_none() {
            return Err(CmdError::Config(
                "a seed is required: set `seed` in the config or pass --seed".into(),
            ));
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("validated config carries a seed")
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("innerfn-out"))
    }
}
