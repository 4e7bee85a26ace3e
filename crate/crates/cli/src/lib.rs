//! `routh` command-line front end: load a system definition, check its
//! symmetry, reduce it, simulate, compare and evaluate the Jacobi metric.
//!
//! Exit codes are stable: 0 ok, 2 definition or usage error, 3 symmetry
//! violation, 4 empty constraint set, 5 unsupported degenerate reduction,
//! 6 comparison failure, 7 numeric domain error.

// Comparisons are written negated on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use routh_core::mechanics::MechanicsError;
use routh_core::routh::{Quadrature, RouthError};
use thiserror::Error;

mod commands;
pub mod file;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DEFINITION: i32 = 2;
pub const EXIT_SYMMETRY: i32 = 3;
pub const EXIT_EMPTY_CONSTRAINT: i32 = 4;
pub const EXIT_UNSUPPORTED: i32 = 5;
pub const EXIT_COMPARISON: i32 = 6;
pub const EXIT_DOMAIN: i32 = 7;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Definition(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Routh(#[from] RouthError),
    #[error("{0}")]
    Domain(String),
}

impl From<MechanicsError> for CliError {
    fn from(e: MechanicsError) -> Self {
        CliError::Routh(e.into())
    }
}

impl From<routh_core::expr::EvalError> for CliError {
    fn from(e: routh_core::expr::EvalError) -> Self {
        CliError::Domain(e.to_string())
    }
}

impl From<routh_core::dynamics::DynamicsError> for CliError {
    fn from(e: routh_core::dynamics::DynamicsError) -> Self {
        CliError::Definition(e.to_string())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Definition(_) | CliError::Io(_) => EXIT_DEFINITION,
            CliError::Domain(_) => EXIT_DOMAIN,
            CliError::Routh(e) => routh_exit_code(e),
        }
    }
}

fn routh_exit_code(e: &RouthError) -> i32 {
    match e {
        RouthError::NotSymmetric(_) => EXIT_SYMMETRY,
        RouthError::EmptyConstraintSet { .. } => EXIT_EMPTY_CONSTRAINT,
        RouthError::Unsupported(_) => EXIT_UNSUPPORTED,
        RouthError::EnergyBelowPotential { .. }
        | RouthError::Integration { .. }
        | RouthError::NoRoot(_)
        | RouthError::Eval(_)
        | RouthError::Mechanics(MechanicsError::SingularHessian { .. })
        | RouthError::Mechanics(MechanicsError::NoConvergence(_))
        | RouthError::Mechanics(MechanicsError::Eval(_)) => EXIT_DOMAIN,
        _ => EXIT_DEFINITION,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "routh",
    version,
    about = "Routh reduction of Lagrangian systems with a cyclic coordinate"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a definition file and check its names.
    Validate { file: PathBuf },
    /// Check that the Lagrangian does not depend on the cyclic coordinate.
    Symmetry {
        file: PathBuf,
        /// Coordinate to test instead of the file's cyclic one.
        #[arg(long)]
        cyclic: Option<String>,
    },
    /// Print the Routhian (or the degenerate reduction) at a momentum level.
    Reduce {
        file: PathBuf,
        #[command(flatten)]
        reduce: ReduceArgs,
        /// Emit JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Integrate the full or reduced equations and write a CSV.
    Simulate {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Which::Full)]
        which: Which,
        /// CSV destination; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        reduce: ReduceArgs,
    },
    /// Simulate full and reduced systems, reconstruct the cyclic coordinate
    /// and report the deviation.
    Compare {
        file: PathBuf,
        #[command(flatten)]
        reduce: ReduceArgs,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// CSV with both trajectories side by side.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = QuadratureArg::Simpson)]
        quadrature: QuadratureArg,
    },
    /// Evaluate the Jacobi-reduced Lagrangian at fixed energy.
    Jacobi {
        file: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        energy: f64,
        /// Orientation of the reparametrized trajectories.
        #[arg(long, value_enum, default_value_t = Sign::Plus, allow_hyphen_values = true)]
        sign: Sign,
        /// CSV of `(q, q̇)` points with a header row; the file's initial
        /// state when absent.
        #[arg(long)]
        sample: Option<PathBuf>,
        /// Search interval for the time velocity.
        #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
        bracket: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Default, Args)]
struct ReduceArgs {
    /// Momentum level; overrides `[reduce] alpha`.
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    /// Index of the constraint root to use when there are several.
    #[arg(long)]
    branch: Option<usize>,
    /// Gauge function of the reduced coordinates.
    #[arg(long, allow_hyphen_values = true)]
    gauge: Option<String>,
    /// Search interval for the cyclic velocity.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    bracket: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Which {
    Full,
    Reduced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum QuadratureArg {
    Simpson,
    Trapezoid,
}

impl From<QuadratureArg> for Quadrature {
    fn from(q: QuadratureArg) -> Self {
        match q {
            QuadratureArg::Simpson => Quadrature::Simpson,
            QuadratureArg::Trapezoid => Quadrature::Trapezoid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Sign {
    #[value(name = "+")]
    Plus,
    #[value(name = "-")]
    Minus,
}

/// Runs the command line `args` (program name first) and returns the exit
/// code. Normal output goes to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    match commands::dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
