use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "lpsrecon", version, about = "Low-rank plus sparse dynamic reconstruction by AltGDmin")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthetic experiments and dataset generation.
    Simulate {
        #[command(subcommand)]
        which: Simulate,
    },
    /// Reconstruct a dataset container.
    Reconstruct(ReconstructArgs),
    /// Print header, per-frame sizes, rank estimate and incoherence of a container.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Include wall times in the reports (makes them non-reproducible).
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Subcommand)]
pub enum Simulate {
    /// Initialization error across sparse magnitudes (Gaussian sensing).
    Exp1(Exp1Args),
    /// NRMSE-vs-iteration curves across sample counts (Gaussian sensing).
    Exp2(Exp2Args),
    /// Streaming reconstruction of a slowly varying multi-coil sequence.
    Stream(StreamArgs),
    /// Write a synthetic multi-coil dataset container plus its ground truth.
    Dataset(DatasetArgs),
}

#[derive(Debug, Args)]
pub struct Exp1Args {
    #[command(flatten)]
    pub out: OutArgs,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 60)]
    pub m: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [10.0, 100.0])]
    pub magnitudes: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct Exp2Args {
    #[command(flatten)]
    pub out: OutArgs,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 600)]
    pub tau: usize,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [60, 90, 100])]
    pub m_values: Vec<usize>,
    /// Sample counts at which the LR-only solver is also run.
    #[arg(long, value_delimiter = ',', default_values_t = [60])]
    pub lr_m_values: Vec<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    #[arg(long, default_value_t = 32)]
    pub nx: usize,
    #[arg(long, default_value_t = 32)]
    pub ny: usize,
    #[arg(long, default_value_t = 3)]
    pub coils: usize,
    /// Radial spokes (or Cartesian lines) per frame.
    #[arg(long, default_value_t = 16)]
    pub lines: usize,
    /// Rank of the low-rank layer of the truth.
    #[arg(long, default_value_t = 4)]
    pub rank: usize,
}

#[derive(Debug, Args)]
pub struct StreamArgs {
    #[command(flatten)]
    pub out: OutArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = 512)]
    pub frames: usize,
    #[arg(long, default_value_t = 32)]
    pub alpha: usize,
    /// Fraction of frames carrying a sparse burst (0 disables bursts).
    #[arg(long, default_value_t = 0.05)]
    pub burst_fraction: f64,
    /// Reconstruction config file (key = value).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DatasetKind {
    /// Mean + low rank + sparse + residual.
    ThreeLevel,
    /// Slowly varying mini-batch sequence with optional bursts.
    Stream,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LayoutArg {
    PseudoRadial,
    Cartesian,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    #[command(flatten)]
    pub out: OutArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, value_enum, default_value_t = DatasetKind::ThreeLevel)]
    pub kind: DatasetKind,
    #[arg(long, value_enum, default_value_t = LayoutArg::PseudoRadial)]
    pub layout: LayoutArg,
    #[arg(long, default_value_t = 64)]
    pub frames: usize,
    /// Batch length of the stream kind.
    #[arg(long, default_value_t = 32)]
    pub alpha: usize,
    /// Burst fraction of the stream kind (0 disables bursts).
    #[arg(long, default_value_t = 0.0)]
    pub burst_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    BatchLps,
    BatchLr,
    FsLps,
    FsLr,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long, value_enum)]
    pub mode: Mode,
    #[arg(long)]
    pub input: PathBuf,
    /// Reconstruction config file (key = value); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Ground-truth matrix file for error metrics.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<usize>,
    /// Fix the rank instead of estimating it.
    #[arg(long)]
    pub rank: Option<usize>,
    /// Iterations of the cold-start solver.
    #[arg(long)]
    pub tau: Option<usize>,
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}
