//! `qadmm` — generate, solve, certify and cost-model semidefinite programs
//! with the classical and quantum-emulated ADMM engines.
//!
//! Exit codes are a stable contract: 0 converged / succeeded, 2 finished
//! without converging within the iteration cap, 64 usage error, 65 data
//! error.

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

mod cmds;
mod docs;
mod store;

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;

/// Command-level failures, mapped onto the exit-code contract.
#[derive(Debug)]
pub enum CmdError {
    Usage(String),
    Data(String),
}

#[derive(Parser, Debug)]
#[command(
    name = "qadmm",
    version,
    about = "SDP solving with classical ADMM and a quantum-emulated inexact scheme"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate instance files (SDPA data plus manifest).
    Gen {
        #[command(subcommand)]
        which: GenCmd,
        /// Output directory (default: $QADMM_OUT_DIR or ./qadmm-out).
        #[arg(long, global = true)]
        out: Option<PathBuf>,
    },
    /// Run a solver on an instance and write trace, ledger and manifest.
    Solve(SolveArgs),
    /// Build and certify the monotone ramp polynomial.
    Poly(PolyArgs),
    /// Evaluate the per-iteration and total cost formulas.
    Cost(CostArgs),
    /// Sweep error budgets on one instance and fit plateaus.
    Compare(CompareArgs),
    /// Melt a trace CSV into tidy long format for plotting tools.
    Plot(PlotArgs),
}

#[derive(Subcommand, Debug)]
pub enum GenCmd {
    /// Random sparse instance with a planted optimum.
    Random(GenRandomArgs),
    /// Max-cut relaxation of the n-cycle.
    MaxcutCycle {
        #[arg(long)]
        n: usize,
    },
    /// Max-cut relaxation of the complete graph K_n.
    MaxcutComplete {
        #[arg(long)]
        n: usize,
    },
    /// Max-cut relaxation of a graph given as an edge-list file
    /// (first line: vertex count; then one `u v` pair per line, 0-based).
    MaxcutEdges {
        #[arg(long)]
        file: PathBuf,
    },
}

#[derive(Args, Debug)]
pub struct GenRandomArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub rank: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Nonzeros per constraint matrix (upper triangle).
    #[arg(long, default_value_t = 4)]
    pub nnz: usize,
    /// Norm-bound slack factor over the planted norms.
    #[arg(long, default_value_t = 1.1)]
    pub r_slack: f64,
    #[arg(long, default_value_t = 0.5)]
    pub x_norm: f64,
    #[arg(long, default_value_t = 0.5)]
    pub s_norm: f64,
    #[arg(long, default_value_t = 0.8)]
    pub y_norm: f64,
}

#[derive(Args, Debug, Clone)]
pub struct BudgetArgs {
    /// Sets all five per-step tolerances at once (the solver pair gets
    /// delta/2 each); individual flags below override.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub delta_hat_y: Option<f64>,
    #[arg(long)]
    pub delta_y: Option<f64>,
    #[arg(long)]
    pub delta_v: Option<f64>,
    #[arg(long)]
    pub delta_s: Option<f64>,
    #[arg(long)]
    pub delta_x: Option<f64>,
    #[arg(long)]
    pub delta_vy: Option<f64>,
    #[arg(long)]
    pub delta_ey: Option<f64>,
    /// Fraction of each budget actually injected.
    #[arg(long, default_value_t = 1.0)]
    pub injection_scale: f64,
    /// Penalty parameter of the augmented Lagrangian.
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Align injected noise with the current residual direction.
    #[arg(long)]
    pub adversarial: bool,
    /// Treat the solver's norm-estimate tolerance as absolute.
    #[arg(long)]
    pub ey_absolute: bool,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    /// Instance directory, manifest path, or bare .dat-s file.
    #[arg(long)]
    pub instance: PathBuf,
    /// classical | qadmm | drs
    #[arg(long, default_value = "classical")]
    pub mode: String,
    #[command(flatten)]
    pub budget: BudgetArgs,
    /// Polynomial accuracy for the spectral updates (qadmm mode).
    #[arg(long, default_value_t = 0.05)]
    pub eps: f64,
    /// Use the exact PSD projection instead of the certified polynomial.
    #[arg(long)]
    pub exact_prox: bool,
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Early-stop threshold on the averaged dual residual.
    #[arg(long, default_value_t = 1e-4)]
    pub stop_dual: f64,
    /// Early-stop threshold on the averaged objective gap.
    #[arg(long, default_value_t = 1e-3)]
    pub stop_gap: f64,
    /// Disable early stopping (fixed-length run).
    #[arg(long)]
    pub no_stop: bool,
    /// Solution-norm bounds, required for bare .dat-s instances.
    #[arg(long)]
    pub r_x: Option<f64>,
    #[arg(long)]
    pub r_y: Option<f64>,
    #[arg(long)]
    pub r_s: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PolyArgs {
    #[arg(long, default_value_t = 0.05)]
    pub eps: f64,
    /// Comma-separated accuracy sweep, e.g. "0.1,0.05,0.02,0.01".
    #[arg(long)]
    pub sweep: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CostArgs {
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Constraint count (default n^2).
    #[arg(long)]
    pub m: Option<usize>,
    /// Total constraint nonzeros (default dense: m * n(n+1)/2).
    #[arg(long)]
    pub s_a: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub kappa_sq: f64,
    #[arg(long, default_value_t = 1.0)]
    pub r_x: f64,
    #[arg(long, default_value_t = 1.0)]
    pub r_y: f64,
    #[arg(long, default_value_t = 1.0)]
    pub r_s: f64,
    /// Trace bound used by the multiplicative-weights comparison row.
    #[arg(long, default_value_t = 1.0)]
    pub r_tr_x: f64,
    /// Newton-system condition number for the interior-point row.
    #[arg(long, default_value_t = 1.0)]
    pub kappa0: f64,
    /// Per-step tolerance applied to all four deltas in the iteration
    /// formula.
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    /// Comma-separated n sweep.
    #[arg(long)]
    pub sweep_n: Option<String>,
    /// Comma-separated eps sweep.
    #[arg(long)]
    pub sweep_eps: Option<String>,
    /// csv | json
    #[arg(long, default_value = "csv")]
    pub format: String,
    /// Also write the table to this file (relative paths land in the
    /// output directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// Comma-separated budget sweep, e.g. "1e-1,1e-2,1e-3".
    #[arg(long)]
    pub deltas: String,
    #[arg(long, default_value_t = 0.05)]
    pub eps: f64,
    #[arg(long)]
    pub exact_prox: bool,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Cap on the per-run iteration count (runs size themselves as 20/delta
    /// within [2000, cap]).
    #[arg(long, default_value_t = 20_000)]
    pub k_max_cap: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    /// Trace CSV produced by `solve` or `compare`.
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    let outcome = match &cli.cmd {
        Cmd::Gen { which, out } => cmds::cmd_gen(which, out.clone()),
        Cmd::Solve(args) => cmds::cmd_solve(args),
        Cmd::Poly(args) => cmds::cmd_poly(args),
        Cmd::Cost(args) => cmds::cmd_cost(args),
        Cmd::Compare(args) => cmds::cmd_compare(args),
        Cmd::Plot(args) => cmds::cmd_plot(args),
    };
    let code = match outcome {
        Ok(code) => code,
        Err(CmdError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            EXIT_USAGE
        }
        Err(CmdError::Data(msg)) => {
            eprintln!("error: {msg}");
            EXIT_DATA
        }
    };
    std::process::exit(code);
}
