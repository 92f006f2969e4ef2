//! Deterministic output files: JSON/CSV writers and the run manifest.
//!
//! Nothing here may depend on wall-clock time or filesystem iteration order;
//! a re-run with the same config must reproduce every byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CmdError;

/// Collects the files a command writes and seals them with a manifest.
pub struct OutputSet {
    dir: PathBuf,
    command: String,
    hashes: BTreeMap<String, String>,
}

impl OutputSet {
    pub fn create(dir: &Path, command: &str) -> Result<Self, CmdError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CmdError::Config(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), command: command.to_string(), hashes: BTreeMap::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn record(&mut self, name: &str, bytes: &[u8]) -> Result<(), CmdError> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes)
            .map_err(|e| CmdError::Config(format!("cannot write {}: {e}", path.display())))?;
        let mut hasher = Sha256::new();
        hasher.update(bytes);
        self.hashes.insert(name.to_string(), format!("{:x}", hasher.finalize()));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CmdError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CmdError::Config(format!("cannot serialize {name}: {e}")))?;
        text.push('\n');
        self.record(name, text.as_bytes())
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<(), CmdError> {
        self.record(name, text.as_bytes())
    }

    /// Writes `manifest.json` describing the command, the resolved config,
    /// and a digest per emitted file.
    pub fn seal(self, config: &RunConfig) -> Result<(), CmdError> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            command: &'a str,
            config: &'a RunConfig,
            files: &'a BTreeMap<String, String>,
        }
        let manifest = Manifest { command: &self.command, config, files: &self.hashes };
        let mut text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CmdError::Config(format!("cannot serialize manifest: {e}")))?;
        text.push('\n');
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, text)
            .map_err(|e| CmdError::Config(format!("cannot write {}: {e}", path.display())))?;
        Ok(())
    }
}

/// One verified identity in a report: the measured value against its
/// expectation, with the acceptance rule spelled out.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityCheck {
    pub name: String,
    pub expected_re: f64,
    pub expected_im: f64,
    pub estimate_re: f64,
    pub estimate_im: f64,
    pub std_error: f64,
    /// Acceptance rule, e.g. "|estimate - expected| <= 4 std errors".
    pub rule: String,
    pub passed: bool,
}

impl IdentityCheck {
    pub fn statistical(
        name: impl Into<String>,
        expected: innerfn_core::Complex64,
        estimate: &innerfn_core::IntegralEstimate,
        z: f64,
    ) -> Self {
        let passed = estimate.within_std_errors(expected, z);
        Self {
            name: name.into(),
            expected_re: expected.re,
            expected_im: expected.im,
            estimate_re: estimate.value.re,
            estimate_im: estimate.value.im,
            std_error: estimate.std_error,
            rule: format!("|estimate - expected| <= {z} std errors"),
            passed,
        }
    }

    pub fn exact(
        name: impl Into<String>,
        expected: f64,
        actual: f64,
        tolerance: f64,
    ) -> Self {
        Self {
            name: name.into(),
            expected_re: expected,
            expected_im: 0.0,
            estimate_re: actual,
            estimate_im: 0.0,
            std_error: 0.0,
            rule: format!("|actual - expected| <= {tolerance}"),
            passed: (actual - expected).abs() <= tolerance,
        }
    }
}
