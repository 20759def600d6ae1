//! Command-line grammar of the `parafun` binary.
//!
//! One subcommand, `run <experiment>`, with long-form `--key value` flags
//! only. Every flag is an override; defaults come from the chosen
//! experiment, so `parafun run fig_cos` reproduces a figure with a single
//! command.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Top-level command line.
#[derive(Debug, Parser)]
#[command(
    name = "parafun",
    about = "Matrix-function experiments: parareal ODE solves, accelerated \
             steady-state marches and virtual-control captures",
    disable_help_subcommand = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Available subcommands.
#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment and write errors.csv, config.resolved.txt and
    /// plot.gp into the output directory.
    Run(RunArgs),
}

/// Flags of `parafun run`.
#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment name: fig_inverse, fig_exp, fig_cos, acc_grad, acc_sd,
    /// acc_inv_approx, acc_inv_exact, control_demo or custom.
    pub experiment: String,

    /// Problem size (matrix order, or grid points per side for the
    /// two-dimensional setups).
    #[arg(long)]
    pub n: Option<usize>,

    /// Number of coarse time intervals.
    #[arg(long = "N")]
    pub big_n: Option<usize>,

    /// Fine steps per coarse interval.
    #[arg(long = "J")]
    pub j: Option<usize>,

    /// Step size of the acceleration marches.
    #[arg(long)]
    pub dt: Option<f64>,

    /// Time scheme of the propagators.
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,

    /// Solver variant for the parareal experiments.
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,

    /// Power-of-two scaling exponent applied before integration.
    #[arg(long = "scale-pow")]
    pub scale_pow: Option<u32>,

    /// Relative stop tolerance of the parareal iteration.
    #[arg(long = "stop-tol")]
    pub stop_tol: Option<f64>,

    /// Iteration cap: parareal corrections, march steps or accepted
    /// control updates, depending on the experiment.
    #[arg(long = "k-max")]
    pub k_max: Option<usize>,

    /// Input matrix in Matrix Market format (custom experiment only).
    #[arg(long)]
    pub matrix: Option<PathBuf>,

    /// Matrix function evaluated by the custom experiment.
    #[arg(long, value_enum)]
    pub function: Option<FunctionArg>,

    /// Worker-thread cap for the parallel sections; 0 keeps the library
    /// default. Results are identical for every value.
    #[arg(long)]
    pub workers: Option<usize>,

    /// Output directory; defaults to $PARAFUN_OUT, then the current
    /// directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Time scheme flag values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    /// Explicit Euler (first order).
    Euler,
    /// Crank-Nicolson (second order, linear flows).
    Cn,
}

/// Solver flag values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    /// Classical parareal iteration.
    Classical,
    /// Subspace-enhanced parareal (linear flows only).
    Modified,
    /// Single sequential fine sweep, no parareal correction.
    Sequential,
}

/// Matrix functions accepted by the custom experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FunctionArg {
    Inverse,
    Exp,
    Cos,
    Sin,
}
