use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "rpca",
    version,
    about = "Robust PCA by accelerated alternating projections and its learned unrolled variant"
)]
pub struct Cli {
    /// Worker threads for per-sample parallelism (0 = all cores).
    #[arg(long, global = true, env = "RPCA_WORKERS", default_value_t = 0)]
    pub workers: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic low-rank plus sparse dataset.
    Gen(GenArgs),
    /// Decompose one matrix into L + S.
    Decompose(DecomposeArgs),
    /// Learn (beta, gamma) of the unrolled network on a dataset's train split.
    Train(TrainArgs),
    /// Evaluate methods on a dataset's test split.
    #[command(after_help = EVAL_HELP)]
    Eval(EvalArgs),
    /// Decompose a stack of equal-size PGM face images at rank 1.
    Faces(FacesArgs),
}

pub const EVAL_HELP: &str = "\
Output CSV columns, in order:
  method,metric,mean,std,count
metric is one of eps_L, eps_S, eps_M, eps_supp; std is the population standard deviation.
Per-sample CSV (--per-sample) columns:
  eps_L,eps_S,eps_M,eps_supp,tags";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Accaltproj,
    Unrolled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ShrinkageArg {
    Firm,
    Soft,
    Hard,
}

impl From<ShrinkageArg> for rpca_core::Shrinkage {
    fn from(s: ShrinkageArg) -> Self {
        match s {
            ShrinkageArg::Firm => rpca_core::Shrinkage::Firm,
            ShrinkageArg::Soft => rpca_core::Shrinkage::Soft,
            ShrinkageArg::Hard => rpca_core::Shrinkage::Hard,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetsArg {
    /// Ground-truth (L*, S*) stored in the dataset.
    Truth,
    /// AccAltProj outputs at tolerance 1e-8.
    FromSolver,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerArg {
    Adam,
    Gd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BatchArg {
    Full,
    PerSample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatArg {
    Bin,
    Csv,
}

impl From<FormatArg> for rpca_core::io::MatrixFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Bin => rpca_core::io::MatrixFormat::Binary,
            FormatArg::Csv => rpca_core::io::MatrixFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenArgs {
    /// Preset case: 1 (alpha 0.1, c 1), 2 (0.3, 1), 3 (0.01, 1), 4 (0.1, 10); d = 250, r = 2.
    #[arg(long, conflicts_with_all = ["d", "r", "alpha", "c"])]
    pub case: Option<u32>,
    #[arg(long, requires_all = ["r", "alpha", "c"])]
    pub d: Option<usize>,
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long, default_value_t = 300)]
    pub total: usize,
    #[arg(long, default_value_t = 180)]
    pub train: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub out: PathBuf,
}

/// Parameters of the unrolled network given on the command line.
#[derive(Debug, Clone, Args, Serialize)]
pub struct NetworkArgs {
    /// JSON with trained parameters (a `train` report or a bare parameter record).
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Overrides beta from --params (default 1/(2 (d1 d2)^(1/4))).
    #[arg(long)]
    pub beta: Option<f64>,
    /// Overrides gamma from --params (default 0.7).
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Number of layers K.
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub upsilon: Option<f64>,
    /// Thresholding used by every unrolled layer.
    #[arg(long, value_enum)]
    pub shrinkage: Option<ShrinkageArg>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolverArgs {
    #[arg(long, default_value_t = rpca_core::solver::DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[arg(long, default_value_t = rpca_core::solver::DEFAULT_MAX_ITERS)]
    pub max_iters: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DecomposeArgs {
    /// Input matrix (.bin or .csv).
    pub input: PathBuf,
    #[arg(short, long)]
    pub rank: usize,
    #[arg(long, value_enum, default_value = "accaltproj")]
    pub method: Method,
    #[command(flatten)]
    pub network: NetworkArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Directory holding ground-truth L.bin and S.bin (M is the input).
    #[arg(long)]
    pub truth_dir: Option<PathBuf>,
    /// Entries with |x| <= tol count as zero in eps_supp.
    #[arg(long, default_value_t = 0.0)]
    pub supp_tol: f64,
    #[arg(long, value_enum, default_value = "bin")]
    pub format: FormatArg,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    /// Dataset directory written by `gen`.
    pub dataset: PathBuf,
    #[arg(long, default_value_t = rpca_core::unrolled::DEFAULT_LAYERS)]
    pub layers: usize,
    #[arg(long, default_value_t = 8)]
    pub epochs: usize,
    /// Sets both learning rates.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value_t = 1e-3)]
    pub lr_beta: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub lr_gamma: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub fd_step: f64,
    #[arg(long, value_enum, default_value = "adam")]
    pub optimizer: OptimizerArg,
    #[arg(long, value_enum, default_value = "per-sample")]
    pub batch: BatchArg,
    #[arg(long, value_enum, default_value = "truth")]
    pub targets: TargetsArg,
    #[arg(long, value_enum, default_value = "firm")]
    pub shrinkage: ShrinkageArg,
    /// Training subset size (first N train samples; default all).
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    /// Dataset directory written by `gen`.
    pub dataset: PathBuf,
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "accaltproj,unrolled"
    )]
    pub methods: Vec<Method>,
    #[command(flatten)]
    pub network: NetworkArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = 0.0)]
    pub supp_tol: f64,
    /// Also write one row per (sample, method).
    #[arg(long)]
    pub per_sample: Option<PathBuf>,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FacesArgs {
    /// Directory of .pgm images, stacked in file-name order.
    pub images: PathBuf,
    #[arg(long, value_enum, default_value = "accaltproj")]
    pub method: Method,
    #[command(flatten)]
    pub network: NetworkArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(short, long)]
    pub out: PathBuf,
}
