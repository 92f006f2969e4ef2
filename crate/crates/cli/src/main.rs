use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use innerfn_cli::commands;
use innerfn_cli::config::RunConfig;
use innerfn_cli::report::OutputSet;
use innerfn_cli::CmdError;

/// Numerical toolkit for bounded holomorphic constructions on covered
/// domains: measure verification, boundary packings, sup-bounded blocks, and
/// the series builder.
#[derive(Parser)]
#[command(name = "innerfn", version)]
struct Cli {
    /// Flat JSON config file; unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run seed (required here or in the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Covering exponent.
    #[arg(long, global = true)]
    q: Option<u32>,
    #[arg(long, global = true)]
    sample_count: Option<usize>,
    #[arg(long, global = true)]
    probe_count: Option<usize>,
    /// Block degree (and degree floor for the series build).
    #[arg(long, global = true)]
    k: Option<u32>,
    #[arg(long, global = true)]
    sign_trials: Option<u64>,
    #[arg(long, global = true)]
    rotation_trials: Option<u64>,
    /// Step budget for the series build.
    #[arg(long, global = true)]
    budget: Option<usize>,
    /// Stop once the boundary defect reaches this value.
    #[arg(long, global = true)]
    defect_target: Option<f64>,
    #[arg(long, global = true)]
    d_psi_max: Option<u32>,
    #[arg(long, global = true)]
    epsilon_energy: Option<f64>,
    /// Output directory for reports and the manifest.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Verify the boundary-measure identities by Monte Carlo.
    VerifyIntegrals,
    /// Build a maximal separated boundary packing and measure its constants.
    Pack,
    /// Search sign patterns for a sup-bounded homogeneous block.
    RwSearch,
    /// Run the full series construction against a constant target.
    BuildInner,
    /// Check the one-variable disc factors against classical identities.
    #[command(name = "oracle-1d")]
    Oracle1d,
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, CmdError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(v) = cli.seed {
        config.seed = Some(v);
    }
    if let Some(v) = cli.q {
        config.q = v;
    }
    if let Some(v) = cli.sample_count {
        config.sample_count = v;
    }
    if let Some(v) = cli.probe_count {
        config.probe_count = v;
    }
    if let Some(v) = cli.k {
        config.k = v;
    }
    if let Some(v) = cli.sign_trials {
        config.sign_trials = v;
    }
    if let Some(v) = cli.rotation_trials {
        config.rotation_trials = v;
    }
    if let Some(v) = cli.budget {
        config.budget = v;
    }
    if let Some(v) = cli.defect_target {
        config.defect_target = Some(v);
    }
    if let Some(v) = cli.d_psi_max {
        config.d_psi_max = v;
    }
    if let Some(v) = cli.epsilon_energy {
        config.epsilon_energy = v;
    }
    if let Some(v) = &cli.out {
        config.output_dir = Some(v.clone());
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: &Cli) -> Result<(), CmdError> {
    let config = resolve_config(cli)?;
    let dir = config.output_dir();
    match cli.command {
        Command::VerifyIntegrals => {
            commands::cmd_verify_integrals(&config, OutputSet::create(&dir, "verify-integrals")?)
        }
        Command::Pack => commands::cmd_pack(&config, OutputSet::create(&dir, "pack")?),
        Command::RwSearch => commands::cmd_rw_search(&config, OutputSet::create(&dir, "rw-search")?),
        Command::BuildInner => {
            commands::cmd_build_inner(&config, OutputSet::create(&dir, "build-inner")?)
        }
        Command::Oracle1d => commands::cmd_oracle_1d(&config, OutputSet::create(&dir, "oracle-1d")?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
