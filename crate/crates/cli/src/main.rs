use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use facrank::data_bench::{RatingFormat, SamplingMode, Scheme};
use facrank::solver::Variant;

mod run;

use run::LambdaArg;

#[derive(Parser)]
#[command(name = "facrank", version, about = "Low-rank matrix completion with column-sparsity penalties")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve synthetic completion instances and report RE, rank and time.
    Synth(SynthArgs),
    /// Solve instances cut from a rating file and report NMAE, rank and time.
    Real(RealArgs),
    /// Scan a lambda grid on one instance and write the scan as CSV.
    Path(PathArgs),
    /// Balanced factorization of a dense matrix.
    Factorize(FactorizeArgs),
    /// Run the built-in oracle checks.
    Selftest(SelftestArgs),
}

#[derive(Args, Clone)]
pub struct SolverArgs {
    /// Solver variant: alg1, alg2 or palm.
    #[arg(long, default_value = "alg1")]
    pub alg: Variant,
    /// A number, beta1:r, beta2:r or auto.
    #[arg(long, default_value = "auto")]
    pub lambda: LambdaArg,
    /// Relative objective change at which to stop (default 1e-7 synthetic, 1e-4 real).
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    /// Factor width; defaults to min(100, ceil(min(m, n) / 2)).
    #[arg(long)]
    pub width: Option<usize>,
    /// Keep all columns in every iteration instead of compacting to the support.
    #[arg(long)]
    pub no_reduce: bool,
    /// Grid size for --lambda auto (default 20 synthetic, 50 real).
    #[arg(long)]
    pub nlambda: Option<usize>,
    #[arg(long)]
    pub delta1: Option<f64>,
    #[arg(long)]
    pub delta2: Option<f64>,
    /// Solve every grid point instead of skipping those above the threshold.
    #[arg(long)]
    pub no_screening: bool,
}

#[derive(Args, Clone)]
pub struct SynthData {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Rank of the planted matrix.
    #[arg(long, default_value_t = 5)]
    pub rank: usize,
    #[arg(long, default_value_t = 0.1)]
    pub sr: f64,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    /// Sampling scheme: 1, 2 or uniform.
    #[arg(long, default_value = "1")]
    pub scheme: Scheme,
    /// Draw independent entries instead of an exact count.
    #[arg(long)]
    pub bernoulli: bool,
}

impl SynthData {
    pub fn mode(&self) -> SamplingMode {
        if self.bernoulli {
            SamplingMode::Bernoulli
        } else {
            SamplingMode::ExactCount
        }
    }
}

#[derive(Args, Clone)]
pub struct RunArgs {
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Run the repeats concurrently (thread count from FACRANK_THREADS).
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub data: SynthData,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Also write each instance as a triplet CSV with a JSON sidecar.
    #[arg(long)]
    pub save_instances: bool,
}

#[derive(Args)]
pub struct RealArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// movielens_100k, movielens_1m or jester_csv.
    #[arg(long, default_value = "movielens_100k")]
    pub format: RatingFormat,
    /// Number of rows (users) to keep; defaults to all.
    #[arg(long, alias = "nu")]
    pub rows: Option<usize>,
    /// Number of columns to keep; defaults to all.
    #[arg(long)]
    pub cols: Option<usize>,
    /// Shuffle each selected row's ratings across the columns.
    #[arg(long)]
    pub permute_rows: bool,
    #[arg(long, default_value_t = 0.25)]
    pub sr: f64,
    #[arg(long, default_value = "1")]
    pub scheme: Scheme,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Args)]
pub struct PathArgs {
    /// Triplet CSV with a JSON sidecar, as written by `synth --save-instances`;
    /// without it a synthetic instance is generated from the data flags.
    #[arg(long)]
    pub instance: Option<PathBuf>,
    #[command(flatten)]
    pub data: SynthData,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct FactorizeArgs {
    /// Headerless dense CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Factor width; defaults to min(m, n).
    #[arg(long)]
    pub d: Option<usize>,
    /// Column-norm bound, or auto for 1.01 times the square root of the spectral norm.
    #[arg(long, default_value = "auto")]
    pub sigma_bound: String,
    /// Directory for x.csv and y.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SelftestArgs {
    /// Smaller instances and fewer draws.
    #[arg(long)]
    pub quick: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, hide = true)]
    pub inject_fault: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Synth(a) => run::synth(&a),
        Command::Real(a) => run::real(&a),
        Command::Path(a) => run::path(&a),
        Command::Factorize(a) => run::factorize(&a),
        Command::Selftest(a) => run::selftest(&a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
