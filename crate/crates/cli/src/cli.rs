//! Command-line surface. Every setting except paths to the config file
//! itself may also come from the JSON config (see [`crate::config`]), so
//! most flags are optional here and resolved later.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "moe-lab",
    version,
    about = "MLP and mixture-of-experts constructions and distillation"
)]
pub struct Cli {
    /// JSON object supplying defaults for any setting; flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    pub force: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an activation dataset (ACTS, plus ACTI in dict mode).
    GenData(GenDataArgs),
    /// Generate a dictionary of unit-norm atoms (DICT).
    GenDict(GenDictArgs),
    /// Fit mean and covariance of a dataset (MOMS) and sample its Gaussian control.
    GaussianControl(GaussianControlArgs),
    /// Distill one student from a teacher.
    Train(TrainArgs),
    /// Distill every (student, dataset, seed) cell; resumable.
    Sweep(SweepArgs),
    /// Check the constructive approximation results numerically.
    VerifyTheory(VerifyArgs),
    /// FVU of predictions against reference outputs.
    Fvu(FvuArgs),
    /// Render a sweep CSV as an FVU-vs-active-neurons SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataMode {
    /// (m, k)-dictionary-sparse samples from a random or given dictionary.
    Dict,
    /// Gaussian samples with the mean and covariance stored in a MOMS file.
    GaussFromMoms,
    /// Isotropic N(0, I/d) samples.
    GaussIso,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, value_enum)]
    pub mode: Option<DataMode>,
    /// Input dimension (dict without --dict, gauss-iso).
    #[arg(long)]
    pub d: Option<usize>,
    /// Number of dictionary atoms (dict without --dict).
    #[arg(long)]
    pub m: Option<usize>,
    /// Atoms per sample (dict).
    #[arg(long)]
    pub k: Option<usize>,
    /// Number of samples.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Existing dictionary to sample from (dict).
    #[arg(long, value_name = "DICT")]
    pub dict: Option<PathBuf>,
    /// Moments to match (gauss-from-moms).
    #[arg(long, value_name = "MOMS")]
    pub moms: Option<PathBuf>,
    /// Output ACTS path; dict mode also writes the .acti next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenDictArgs {
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Orthonormal atoms (needs m <= d).
    #[arg(long)]
    pub orthonormal: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GaussianControlArgs {
    /// Dataset whose moments to match.
    #[arg(long, value_name = "ACTS")]
    pub acts: Option<PathBuf>,
    /// Number of control samples (default: same as the input).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output ACTS path for the control samples.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output MOMS path (default: the output path with extension .moms).
    #[arg(long, value_name = "MOMS")]
    pub moms_out: Option<PathBuf>,
}

/// Training settings shared by `train` and `sweep`.
#[derive(Debug, Args)]
pub struct TrainingArgs {
    /// `identity`, `linear:dict=<DICT>,k=<k>,seed=<s>`, or an MLPW/MOEW file.
    #[arg(long)]
    pub teacher: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Comma-separated learning rates.
    #[arg(long, value_delimiter = ',')]
    pub lr_grid: Vec<f64>,
    /// Test evaluations happen every this many steps (default: 20 per run).
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Directory for cached teacher outputs (default: <out-dir>/teacher-cache).
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub training: TrainingArgs,
    /// Training inputs (ACTS).
    #[arg(long, value_name = "ACTS")]
    pub train: Option<PathBuf>,
    /// Test inputs (ACTS).
    #[arg(long, value_name = "ACTS")]
    pub test: Option<PathBuf>,
    /// Student, e.g. `moe:m=64,k=4,d_exp=4` or `mlp:width=16`.
    #[arg(long)]
    pub student: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub training: TrainingArgs,
    /// `<tag>=<train.acts>,<test.acts>`; repeatable.
    #[arg(long = "dataset")]
    pub datasets: Vec<String>,
    /// Student spec; repeatable.
    #[arg(long = "student")]
    pub students: Vec<String>,
    /// Comma-separated training seeds (default: the resolved seed).
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Cells trained in parallel.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Linear,
    Polynomial,
    Tensor,
    GaussianFloor,
    All,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub suite: Option<Suite>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Polynomial degree (polynomial, tensor).
    #[arg(long)]
    pub p: Option<usize>,
    /// Rank of the planted interactions (polynomial, tensor).
    #[arg(long)]
    pub r: Option<usize>,
    /// Samples per check.
    #[arg(long)]
    pub n: Option<usize>,
    /// Student width (gaussian-floor).
    #[arg(long)]
    pub width: Option<usize>,
    /// Training epochs (gaussian-floor).
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Use an orthonormal dictionary (linear, polynomial).
    #[arg(long)]
    pub orthonormal: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write theory_report.csv and a manifest here.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FvuArgs {
    /// Predicted outputs (ACTS).
    #[arg(long, value_name = "ACTS")]
    pub pred: PathBuf,
    /// Reference outputs (ACTS).
    #[arg(long = "ref", value_name = "ACTS")]
    pub reference: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Sweep results CSV.
    #[arg(long)]
    pub csv: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub title: Option<String>,
}
