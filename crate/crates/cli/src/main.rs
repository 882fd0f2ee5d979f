//! `focal`: geodesics, Lax invariants and self-focal diagnostics on ellipsoids.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use focal_core::FocalError;

#[derive(Parser)]
#[command(name = "focal", version, about = "Geodesic flow and self-focal points on ellipsoids")]
struct Cli {
    /// TOML file of `key = value` defaults; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
pub struct Common {
    /// Semi-axes a_j, comma separated (squared semi-axes with --squared).
    #[arg(long, allow_hyphen_values = true)]
    pub axes: Option<String>,
    /// Read --axes as the eigenvalues alpha_j = a_j^2 of A.
    #[arg(long)]
    pub squared: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[arg(long)]
    pub abs_tol: Option<f64>,
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Integrator step budget (accepted plus rejected).
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Worker threads (default 1, bit-reproducible).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output stem: `<out>.json`, plus `<out>.csv` where a table is produced.
    /// Without it the JSON report goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
pub struct PointArgs {
    /// `random`, `umbilic`, `special` or comma-separated coordinates (projected onto the ellipsoid).
    #[arg(long)]
    pub point: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one unit-speed geodesic; writes the trajectory CSV and a diagnostics report.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        point: PointArgs,
        /// Initial tangent direction (projected and normalized); random if omitted.
        #[arg(long, allow_hyphen_values = true)]
        direction: Option<String>,
    },
    /// Check Lax spectra, the Phi_z identity, confocal tangency and the Lax equation on random phase points.
    LaxVerify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Launch geodesics from a point in many directions and classify it.
    FocalScan {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        point: PointArgs,
        #[arg(long)]
        directions: Option<usize>,
    },
    /// Sample the first return map of a self-focal point, its fixed directions and twistedness.
    ReturnMap {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        point: PointArgs,
        /// Grid size on the direction sphere.
        #[arg(long)]
        directions: Option<usize>,
        /// Common return time; found by a scan when omitted.
        #[arg(long)]
        t_common: Option<f64>,
        /// Finite-difference stencil width for the derivative of the return map.
        #[arg(long)]
        twist: Option<f64>,
    },
    /// Umbilic points (three axes) or the special point of a (1, n-2, 1) ellipsoid, with moment constancy.
    Umbilic {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// First returns to the umbilic of the reduced Rosochatius flow over a grid of j.
    Rosochatius {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        directions: Option<usize>,
        /// Comma-separated angular momenta.
        #[arg(long)]
        j_grid: Option<String>,
    },
    /// Run the acceptance battery and print one PASS/FAIL line per criterion.
    Suite {
        #[command(flatten)]
        common: Common,
        /// Criterion numbers, tags or names, comma separated.
        #[arg(long)]
        only: Option<String>,
        #[arg(long)]
        j_grid: Option<String>,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(FocalError),
    /// The command ran but its outcome is a failure (a suite criterion failed).
    Failed(String),
}

impl From<FocalError> for CliError {
    fn from(e: FocalError) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(FocalError::Io(_) | FocalError::Json(_)) => 1,
            CliError::Core(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Failed(m) => write!(f, "{m}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = config::Resolver::new(cli.config.as_deref()).and_then(|mut r| match cli.command {
        Command::Simulate { common, point, direction } => commands::simulate(&mut r, common, point, direction),
        Command::LaxVerify { common, samples } => commands::lax_verify(&mut r, common, samples),
        Command::FocalScan { common, point, directions } => commands::focal_scan(&mut r, common, point, directions),
        Command::ReturnMap { common, point, directions, t_common, twist } => {
            commands::return_map(&mut r, common, point, directions, t_common, twist)
        }
        Command::Umbilic { common, samples } => commands::umbilic(&mut r, common, samples),
        Command::Rosochatius { common, directions, j_grid } => commands::rosochatius(&mut r, common, directions, j_grid),
        Command::Suite { common, only, j_grid } => commands::suite(&mut r, common, only, j_grid),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("focal: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
