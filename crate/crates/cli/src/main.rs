//! Command-line experiment runner: generate instances, run the solvers,
//! verify schedules and rate certificates, fit convergence rates, and
//! reproduce the experiment figures at a configurable scale.

mod commands;
mod instance;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

pub type CliResult<T> = Result<T, Box<dyn std::error::Error>>;

#[derive(Parser)]
#[command(
    name = "pdblock",
    about = "Primal-dual proximal block coordinate update solvers and experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a problem instance and write it as JSON
    Gen(GenArgs),
    /// Run a solver, writing a convergence trace (CSV or JSON)
    Run(RunArgs),
    /// Check schedule parameter conditions and optionally the run-based
    /// inequality and certificate-bound checks
    Verify(VerifyArgs),
    /// Fit a convergence rate on an existing trace
    Rates(RatesArgs),
    /// Reproduce an experiment family at a configurable scale
    Repro(ReproArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgoArg {
    /// accelerated proximal Jacobian ADMM
    Jacobi,
    /// randomized primal-dual BCU with fixed parameters
    RpdcFixed,
    /// randomized primal-dual BCU with the adaptive (accelerated) schedule
    RpdcAdaptive,
    /// linearly convergent y-block variant
    Linear,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RecipeArg {
    /// log-barrier preset eta_x = beta ||A||^2, eta_y = beta(1 + 2.001 beta/(3 mu))
    Preset,
    /// general linear-variant recipe
    General,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SeriesArg {
    ObjGap,
    Feas,
    DistSq,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RateKindArg {
    Power,
    Geometric,
}

#[derive(Args, Clone)]
pub struct InstanceArgs {
    /// QP family: 1/2 x'Qx + c'x, Ax = b, x >= 0 with cond(Q) = L
    #[arg(long, conflicts_with_all = ["lp", "problem"])]
    pub qp: bool,
    /// log-barrier LP family: c'x - sum log x - sum log y, Ax + y = b, x <= u
    #[arg(long, conflicts_with = "problem")]
    pub lp: bool,
    /// load a problem JSON written by `gen` instead of generating
    #[arg(long)]
    pub problem: Option<PathBuf>,
    #[arg(long, default_value_t = 40)]
    pub n: usize,
    #[arg(long, default_value_t = 8)]
    pub p: usize,
    /// Hessian condition number of the QP family
    #[arg(long = "L", default_value_t = 10.0)]
    pub cond: f64,
    #[arg(long, default_value_t = 8)]
    pub blocks: usize,
    /// coordinate upper bound of the LP family
    #[arg(long, default_value_t = 10.0)]
    pub u: f64,
}

#[derive(Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[arg(long, env = "PDBLOCK_SEED", default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[arg(long, value_enum)]
    pub algo: AlgoArg,
    /// blocks updated per iteration (0 = all)
    #[arg(long, default_value_t = 0)]
    pub m: usize,
    /// free parameter rho >= 1 of the adaptive schedule
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    /// penalty parameter of the fixed and linear-variant schedules
    #[arg(long)]
    pub beta: Option<f64>,
    /// strong convexity modulus override (defaults to the instance's)
    #[arg(long)]
    pub mu: Option<f64>,
    /// y-term modulus override (defaults to the instance's heuristic)
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long, default_value_t = 2000)]
    pub iters: usize,
    #[arg(long, env = "PDBLOCK_SEED", default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    pub format: FormatArg,
    /// iteration budget of the certified reference run
    #[arg(long, default_value_t = 200_000)]
    pub ref_iters: usize,
    /// skip the reference (obj_gap and dist_sq columns become NaN)
    #[arg(long)]
    pub no_ref: bool,
    /// record the mode-matched ergodic average in the JSON envelope
    #[arg(long)]
    pub ergodic: bool,
    /// early-exit KKT tolerance
    #[arg(long, default_value_t = 1e-12)]
    pub stop_tol: f64,
    /// disable the early exit entirely
    #[arg(long)]
    pub no_early_stop: bool,
    #[arg(long, value_enum, default_value_t = RecipeArg::Preset)]
    pub recipe: RecipeArg,
}

#[derive(Args)]
pub struct VerifyArgs {
    /// schedule kind whose conditions to check
    #[arg(long, value_enum)]
    pub schedule: AlgoArg,
    #[arg(long, default_value_t = 1.0)]
    pub theta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    #[arg(long, default_value_t = 1.0)]
    pub nu: f64,
    /// uniform partial-gradient Lipschitz constant L_m
    #[arg(long = "lm", default_value_t = 0.0)]
    pub lip_partial: f64,
    /// full-gradient Lipschitz constant L_f
    #[arg(long = "lf", default_value_t = 0.0)]
    pub lip_full: f64,
    #[arg(long, default_value_t = 1.0)]
    pub norm_a: f64,
    #[arg(long, default_value_t = 1.0)]
    pub norm_b: f64,
    /// iteration budget the conditions are checked over
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    /// override the derived k0 (for mutation testing)
    #[arg(long)]
    pub k0: Option<f64>,
    /// also run the solver on a generated QP and check the one-iteration
    /// inequality and certificate bounds
    #[arg(long)]
    pub with_run: bool,
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[arg(long, default_value_t = 500)]
    pub run_iters: usize,
    #[arg(long, default_value_t = 200_000)]
    pub ref_iters: usize,
    #[arg(long, env = "PDBLOCK_SEED", default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct RatesArgs {
    /// trace file (.csv or .json) written by `run`
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long, value_enum, default_value_t = SeriesArg::ObjGap)]
    pub series: SeriesArg,
    #[arg(long, value_enum, default_value_t = RateKindArg::Geometric)]
    pub kind: RateKindArg,
    /// fit window start (defaults to 20% burn-in)
    #[arg(long)]
    pub from: Option<usize>,
    /// fit window end (defaults to the last iteration)
    #[arg(long)]
    pub to: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ReproArgs {
    /// fig1 | fig2 | fig3 (QP, L = 10/100/1000) or fig4 (log-barrier LP)
    #[arg(long)]
    pub preset: String,
    /// dimension scale factor relative to the full-size experiment
    #[arg(long, default_value_t = 0.1)]
    pub scale: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// per-run iteration override
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long, default_value_t = 200_000)]
    pub ref_iters: usize,
    #[arg(long, env = "PDBLOCK_SEED", default_value_t = 1)]
    pub seed: u64,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen(args) => commands::cmd_gen(&args),
        Command::Run(args) => commands::cmd_run(&args),
        Command::Verify(args) => commands::cmd_verify(&args),
        Command::Rates(args) => commands::cmd_rates(&args),
        Command::Repro(args) => commands::cmd_repro(&args),
    };
    match outcome {
        Ok(all_pass) => {
            if all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
