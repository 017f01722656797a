use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use pmc_core::solvers::{Algorithm, ProjectionMethod};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "pmc", version, about = "Low-rank Poisson matrix completion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a low-rank truth and Poisson counts on a random mask.
    Simulate(SimulateArgs),
    /// Estimate a matrix from observed counts.
    Complete(CompleteArgs),
    /// Evaluate the upper and lower error bounds.
    Bounds(BoundsArgs),
    /// Monte Carlo check of the supporting inequalities.
    Verify(VerifyArgs),
    /// Recover a grayscale image from subsampled Poisson counts.
    Demo(DemoArgs),
    /// Re-run a command from its manifest.json.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub d1: usize,
    #[arg(long)]
    pub d2: usize,
    #[arg(long)]
    pub rank: usize,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub beta: f64,
    /// Expected number of observed entries.
    #[arg(long)]
    pub m: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "run")]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SolverArgs {
    #[arg(long, default_value = "pmlsv")]
    pub algo: Algorithm,
    /// Iteration budget K.
    #[arg(long, default_value_t = 2000)]
    pub iters: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub l0: f64,
    #[arg(long, default_value_t = 1.1)]
    pub eta: f64,
    /// Projection onto the feasible set used by pg and apg.
    #[arg(long, default_value = "dykstra")]
    pub projection: ProjectionMethod,
    #[arg(long, default_value_t = 1e-6)]
    pub proj_tol: f64,
    #[arg(long, default_value_t = 500)]
    pub proj_max_iter: usize,
    /// Print one line per accepted iteration to stderr.
    #[arg(long)]
    #[serde(skip)]
    pub verbose: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CompleteArgs {
    /// Observation CSV with header i,j,y.
    #[arg(long)]
    pub obs: PathBuf,
    /// Row count; inferred from the largest index when absent.
    #[arg(long)]
    pub d1: Option<usize>,
    #[arg(long)]
    pub d2: Option<usize>,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub beta: f64,
    #[arg(long)]
    pub rank: usize,
    /// Truth CSV; enables the mse field of the report.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Also report the MSE of the constant (alpha + beta) / 2 matrix.
    #[arg(long, requires = "truth")]
    pub baseline: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "run")]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BoundsArgs {
    #[arg(long)]
    pub d1: usize,
    #[arg(long)]
    pub d2: usize,
    #[arg(long)]
    pub rank: usize,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub beta: f64,
    #[arg(long)]
    pub m: f64,
    #[arg(long)]
    pub c_prime: Option<f64>,
    #[arg(long)]
    pub c0: Option<f64>,
    #[arg(long)]
    pub c1: Option<f64>,
    #[arg(long)]
    pub c2: Option<f64>,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
    /// Also write bounds.json and manifest.json here.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct VerifyArgs {
    /// Scalar pairs; matrix pairs are a tenth of this and tail draws a
    /// hundredfold per rate and threshold.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 9.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 10)]
    pub d1: usize,
    #[arg(long, default_value_t = 8)]
    pub d2: usize,
    #[arg(long, default_value_t = 2)]
    pub rank: usize,
    #[arg(long, default_value = "run")]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DemoArgs {
    /// Grayscale PGM or CSV; the bundled 48x48 rank-10 frame when absent.
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Expected observed fraction of patch-matrix entries.
    #[arg(long, default_value_t = 0.8)]
    pub p: f64,
    /// Pixel to intensity multiplier.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Upper intensity bound; the brightest lifted pixel when absent.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = 10)]
    pub rank: usize,
    #[arg(long, default_value_t = 8)]
    pub patch_h: usize,
    #[arg(long, default_value_t = 8)]
    pub patch_w: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "run")]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Output directory; the manifest's own directory when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
