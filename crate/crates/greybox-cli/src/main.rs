//! `greybox`: modal and participation analysis of dq-frame system models.
//!
//! Subcommands: `modes` (eigenvalues + per-node admittance sweeps),
//! `participate` (grey-box layer reports, optionally with finite-difference
//! verification), `fit` (rational approximation of a sampled spectrum).
//!
//! Exit codes: 0 success, 2 input/configuration, 3 assembly/equilibrium,
//! 4 degenerate spectrum, 5 fit failure.

mod commands;
mod jsonout;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use greybox::error::{ConfigError, FitError, LtiError, NetError, ParticipationError};

#[derive(Parser)]
#[command(name = "greybox", version, about = "Grey-box modal participation analysis")]
struct Cli {
    /// Suppress the human-readable summary on standard output.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SweepArgs {
    /// Lower edge of the frequency sweep, Hz.
    #[arg(long, default_value_t = 0.1)]
    fmin: f64,
    /// Upper edge of the frequency sweep, Hz.
    #[arg(long, default_value_t = 1.0e4)]
    fmax: f64,
    /// Number of logarithmically spaced points.
    #[arg(long, default_value_t = 400)]
    points: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Compute system modes and whole-system admittance sweeps.
    Modes {
        /// System description JSON.
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        sweep: SweepArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Grey-box Layer-1/2/3 participation reports.
    Participate {
        /// System description JSON.
        #[arg(long)]
        config: PathBuf,
        /// Select modes by frequency window, Hz, as `LO:HI` (|Im|/2pi).
        #[arg(long, value_name = "LO:HI")]
        mode_freq: Option<String>,
        /// Select modes with damping ratio below the threshold.
        #[arg(long)]
        damping_below: Option<f64>,
        /// Restrict the report to a comma-separated node list.
        #[arg(long)]
        nodes: Option<String>,
        /// Run the finite-difference eigenvalue-shift verification and write
        /// the convergence table.
        #[arg(long)]
        verify: bool,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a rational model to a sampled spectrum CSV.
    Fit {
        /// Spectrum CSV (freq_hz, re_rc/im_rc columns).
        spectrum: PathBuf,
        /// Number of poles.
        #[arg(long)]
        order: usize,
        /// Pole-relocation passes.
        #[arg(long, default_value_t = 10)]
        iters: usize,
        /// Output directory (defaults to the spectrum's directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Process-level error with its exit code.
pub(crate) enum CliError {
    Input(String),
    Assembly(String),
    Degenerate(String),
    Fit(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Assembly(_) => 3,
            CliError::Degenerate(_) => 4,
            CliError::Fit(_) => 5,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Assembly(m) | CliError::Degenerate(m) | CliError::Fit(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<NetError> for CliError {
    fn from(e: NetError) -> Self {
        match &e {
            NetError::Lti(LtiError::DegenerateSpectrum { .. }) => CliError::Degenerate(e.to_string()),
            _ => CliError::Assembly(e.to_string()),
        }
    }
}

impl From<ParticipationError> for CliError {
    fn from(e: ParticipationError) -> Self {
        match &e {
            ParticipationError::Lti(LtiError::DegenerateSpectrum { .. })
            | ParticipationError::AmbiguousMatch { .. }
            | ParticipationError::Net(NetError::Lti(LtiError::DegenerateSpectrum { .. })) => {
                CliError::Degenerate(e.to_string())
            }
            _ => CliError::Assembly(e.to_string()),
        }
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        match &e {
            FitError::Config(_) | FitError::TooFewSamples { .. } => CliError::Input(e.to_string()),
            _ => CliError::Fit(e.to_string()),
        }
    }
}

fn configure_threads() {
    if let Ok(raw) = std::env::var("GREYBOX_THREADS") {
        if let Ok(n) = raw.trim().parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn main() -> ExitCode {
    configure_threads();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Modes { config, sweep, out } => {
            commands::cmd_modes(config, sweep, out, cli.quiet)
        }
        Command::Participate {
            config,
            mode_freq,
            damping_below,
            nodes,
            verify,
            out,
        } => commands::cmd_participate(
            config,
            mode_freq.as_deref(),
            *damping_below,
            nodes.as_deref(),
            *verify,
            out,
            cli.quiet,
        ),
        Command::Fit {
            spectrum,
            order,
            iters,
            out,
        } => commands::cmd_fit(spectrum, *order, *iters, out.as_deref(), cli.quiet),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
