//! Command-line front end: data ingestion, fitting, simulation,
//! benchmarking, evaluation and enrichment scoring.
//!
//! Exit codes: 0 success, 2 input/argument error, 3 numerical failure.

mod commands;
mod io;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Debug)]
pub struct CliError {
    pub message: String,
    pub code: i32,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { message: message.into(), code: 2 }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        CliError { message: message.into(), code: 3 }
    }
}

impl From<gsppca::Error> for CliError {
    fn from(e: gsppca::Error) -> Self {
        if e.is_numerical() {
            CliError::numerical(e.to_string())
        } else {
            CliError::usage(e.to_string())
        }
    }
}

#[derive(Parser)]
#[command(
    name = "gsppca",
    version,
    about = "Globally sparse probabilistic PCA: variable selection by exact marginal likelihood"
)]
struct Cli {
    /// Worker threads (overrides the GSPPCA_THREADS environment variable;
    /// default: machine parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the model to a CSV matrix and select the variable support.
    Fit(FitArgs),
    /// Generate a synthetic dataset with a known ground truth.
    Simulate(SimulateArgs),
    /// Run replicated recovery benchmarks over a parameter grid.
    Benchmark(BenchmarkArgs),
    /// F-score between a predicted support and a ground truth.
    Evaluate(EvaluateArgs),
    /// Gene-set enrichment of a selection (hypergeometric + BH).
    Enrich(EnrichArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SigmaEstimatorArg {
    Ml,
    Median,
    Unbiased,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SvdArg {
    Exact,
    Randomized,
    /// SVD-free mode: random initialization, median noise estimator.
    None,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FilterArg {
    /// Filter only when p > 2000.
    Auto,
    On,
    Off,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScenarioArg {
    Intro,
    Snr,
    Blocks,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NoiseArg {
    Gaussian,
    Laplace,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BenchScenarioArg {
    Snr,
    Blocks,
}

#[derive(Args)]
struct FitArgs {
    /// Input CSV (n rows, p columns, no header unless --header).
    #[arg(long)]
    input: PathBuf,
    /// JSON report path (stdout when omitted).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Latent dimension d.
    #[arg(long)]
    latent_dim: usize,
    /// Optional CSV of the renormalized loadings (p x d).
    #[arg(long)]
    loadings: Option<PathBuf>,
    /// Optional CSV of the renormalized scores (n x d).
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "median")]
    sigma_estimator: SigmaEstimatorArg,
    /// Warm-start grid for the slab precision.
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 1.0, 10.0])]
    alpha_grid: Vec<f64>,
    #[arg(long, default_value_t = 300)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-7)]
    rel_tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Input is already centered; verify instead of centering.
    #[arg(long)]
    no_center: bool,
    /// First CSV row is a header.
    #[arg(long)]
    header: bool,
    /// Drop variables whose relaxed coefficient falls below this before
    /// the model-selection sweep (when filtering is on).
    #[arg(long, default_value_t = 1e-8)]
    speedup_threshold: f64,
    #[arg(long, value_enum, default_value = "auto")]
    filter: FilterArg,
    #[arg(long, value_enum, default_value = "exact")]
    svd: SvdArg,
    /// Embed wall-clock timing in the report (breaks byte-identical
    /// reproducibility of the file; timing always goes to stderr).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    scenario: ScenarioArg,
    /// Data CSV path.
    #[arg(long)]
    output: PathBuf,
    /// Truth sidecar path (default: <output>.truth.json).
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    /// Noise standard deviation (intro scenario).
    #[arg(long)]
    sigma: Option<f64>,
    /// Signal-to-noise ratio (snr scenario).
    #[arg(long)]
    snr: Option<f64>,
    /// Off-diagonal covariance of each block (blocks scenario).
    #[arg(long)]
    rho: Option<f64>,
    /// Diagonal covariance of each block (blocks scenario).
    #[arg(long)]
    block_diag: Option<f64>,
    #[arg(long, value_enum, default_value = "gaussian")]
    noise: NoiseArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long, value_enum)]
    scenario: BenchScenarioArg,
    /// Per-replicate results CSV.
    #[arg(long)]
    output: PathBuf,
    /// Grid summary CSV (median/quartiles and mean/sd per grid point).
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sample size for the snr scenario.
    #[arg(long, default_value_t = 40)]
    n: usize,
    #[arg(long, default_value_t = 0.1)]
    snr_min: f64,
    #[arg(long, default_value_t = 3.0)]
    snr_max: f64,
    #[arg(long, default_value_t = 20)]
    snr_steps: usize,
    /// Sample sizes for the blocks scenario (default p/5, p/4, floor(p/3),
    /// p/2, p).
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value = "gaussian")]
    noise: NoiseArg,
    /// Off-diagonal covariance of each block (blocks scenario).
    #[arg(long)]
    rho: Option<f64>,
    /// Diagonal covariance of each block (blocks scenario).
    #[arg(long)]
    block_diag: Option<f64>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Predicted support: JSON mask array or a fit report.
    #[arg(long)]
    predicted: PathBuf,
    /// Ground truth: JSON mask array or a truth sidecar.
    #[arg(long)]
    truth: PathBuf,
}

#[derive(Args)]
struct EnrichArgs {
    /// Selection: JSON mask array, fit report, or truth sidecar.
    #[arg(long)]
    selection: PathBuf,
    /// Gene sets in GMT format (name, description, members; tab-separated).
    #[arg(long)]
    gmt: PathBuf,
    /// Variable names, one per line, in CSV column order.
    #[arg(long)]
    names: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    threshold: f64,
    /// JSON report path (stdout when omitted).
    #[arg(long)]
    output: Option<PathBuf>,
}

fn resolve_threads(flag: Option<usize>) -> Option<usize> {
    flag.or_else(|| {
        std::env::var("GSPPCA_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&t| t > 0)
    })
}

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = resolve_threads(cli.threads) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("gsppca: cannot configure {threads} threads: {e}");
            std::process::exit(2);
        }
    }
    let result = match cli.command {
        Command::Fit(args) => commands::fit(args),
        Command::Simulate(args) => commands::simulate(args),
        Command::Benchmark(args) => commands::benchmark(args),
        Command::Evaluate(args) => commands::evaluate(args),
        Command::Enrich(args) => commands::enrich(args),
    };
    if let Err(e) = result {
        eprintln!("gsppca: {}", e.message);
        std::process::exit(e.code);
    }
}
