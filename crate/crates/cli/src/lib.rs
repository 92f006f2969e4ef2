//! Command layer: config resolution, the five verification/build commands,
//! and deterministic report files sealed by a manifest.

pub mod commands;
pub mod config;
pub mod report;

/// Command failure with its exit code: 1 for configuration (including target
/// positivity), 2 for violated invariants, 3 for a stagnated construction.
#[derive(Debug)]
pub enum CmdError {
    Config(String),
    Invariant(String),
    Stagnation(String),
}

impl CmdError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CmdError::Config(_) => 1,
            CmdError::Invariant(_) => 2,
            CmdError::Stagnation(_) => 3,
        }
    }
}

impl std::fmt::Display for CmdError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CmdError::Config(msg) => write!(f, "configuration: {msg}"),
            CmdError::Invariant(msg) => write!(f, "invariant violated: {msg}"),
            CmdError::Stagnation(msg) => write!(f, "stagnation: {msg}"),
        }
    }
}

impl std::error::Error for CmdError {}

impl From<innerfn_core::Error> for CmdError {
    fn from(e: innerfn_core::Error) -> Self {
        match e {
            innerfn_core::Error::Positivity(_)
            | innerfn_core::Error::Domain(_)
            | innerfn_core::Error::EmptyInput(_) => CmdError::Config(e.to_string()),
            innerfn_core::Error::Stagnation(_) => CmdError::Stagnation(e.to_string()),
            other => CmdError::Invariant(other.to_string()),
        }
    }
}
