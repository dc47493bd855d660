//! Command-line front end: config loading, subcommands, CSV and SVG output.

pub mod commands;
pub mod config;
pub mod csv;
pub mod svg;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use kerr_cmm::steady_state::BranchHint;

use commands::{Invocation, Outcome, DEFAULT_SEED};
use config::{ConfigError, RunConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_NUMERICAL: u8 = 2;
pub const EXIT_MISMATCH: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "kerr-cmm", version, about = "Kerr cavity magnomechanics simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write SVG plots.
    #[arg(long)]
    pub svg: bool,
    /// Seed for verify's perturbation phases.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BranchArg {
    Lower,
    Upper,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// All steady states at the configured drive.
    Steady(Common),
    /// Forward and backward power (or frequency) sweep.
    Sweep(Common),
    /// Probe reflection spectrum on one branch.
    Spectrum(Common),
    /// Fit the bare magnon frequency to an observed dressed one.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        observed_nu_m_hz: f64,
        #[arg(long, allow_hyphen_values = true)]
        at_power_dbm: f64,
        /// Branch the observation was taken on, if the point is bistable.
        #[arg(long, value_enum)]
        branch: Option<BranchArg>,
    },
    /// Check every steady state against the time-domain equations.
    Verify(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Steady(c) | Command::Sweep(c) | Command::Spectrum(c) | Command::Verify(c) => c,
            Command::Calibrate { common, .. } => common,
        }
    }
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let common = cli.command.common();
    let config = RunConfig::load(&common.config)?;
    let inv = Invocation {
        config_path: common.config.clone(),
        out_dir: common.out.clone().unwrap_or_else(|| config.output.dir.clone()),
        svg: common.svg || config.output.svg,
        seed: common.seed,
        config,
    };
    match &cli.command {
        Command::Steady(_) => commands::cmd_steady(&inv),
        Command::Sweep(_) => commands::cmd_sweep(&inv),
        Command::Spectrum(_) => commands::cmd_spectrum(&inv),
        Command::Calibrate {
            observed_nu_m_hz,
            at_power_dbm,
            branch,
            ..
        } => {
            let hint = branch.map(|b| match b {
                BranchArg::Lower => BranchHint::Lower,
                BranchArg::Upper => BranchHint::Upper,
            });
            commands::cmd_calibrate(&inv, *observed_nu_m_hz, *at_power_dbm, hint)
        }
        Command::Verify(_) => commands::cmd_verify(&inv),
    }
}

/// 1 for configuration problems (including out-of-range parameters), 2 for
/// everything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return EXIT_CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<kerr_cmm::Error>() {
            return match e {
                kerr_cmm::Error::InvalidParameter { .. } => EXIT_CONFIG,
                _ => EXIT_NUMERICAL,
            };
        }
    }
    EXIT_NUMERICAL
}
