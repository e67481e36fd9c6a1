//! `scatter`: scattering coefficients, reconstruction, linear probes and
//! attacks from the command line.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use scatter_core::{BoundaryMode, Precision, ScatteringConfig};

#[derive(Parser, Debug)]
#[command(
    name = "scatter",
    version,
    about = "Order-2 scattering transform toolkit"
)]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, env = "SCATTER_SEED", default_value_t = 0)]
    pub seed: u64,

    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true, env = "SCATTER_WORKERS")]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Scatter images and write SCT1 coefficient files.
    Forward(ForwardArgs),
    /// Recover an image from its coefficients by gradient descent.
    Reconstruct(ReconstructArgs),
    /// Render the filter bank and its Littlewood–Paley sum.
    Filters(FiltersArgs),
    /// Train a linear probe on a directory of class subdirectories.
    Train(TrainArgs),
    /// Sign-gradient attack on a trained probe.
    Attack(AttackArgs),
    /// Angular-frequency energy of a trained probe.
    Analyze(AnalyzeArgs),
    /// Time the forward pipeline and compare memory layouts.
    Bench(BenchArgs),
    /// Run the invariant suite.
    Selftest(SelftestArgs),
    /// Write the synthetic texture dataset or the reference scene.
    Dataset(DatasetArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum BoundaryArg {
    Reflect,
    Periodic,
}

impl From<BoundaryArg> for BoundaryMode {
    fn from(b: BoundaryArg) -> Self {
        match b {
            BoundaryArg::Reflect => BoundaryMode::Reflect,
            BoundaryArg::Periodic => BoundaryMode::Periodic,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PrecisionArg {
    Single,
    Double,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::Single => Precision::Single,
            PrecisionArg::Double => Precision::Double,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct TransformArgs {
    /// Number of scales.
    #[arg(long = "J", default_value_t = 2)]
    pub j: u32,
    /// Number of angles.
    #[arg(long = "L", default_value_t = 8)]
    pub l: usize,
    #[arg(long, value_enum, default_value = "reflect")]
    pub boundary: BoundaryArg,
    #[arg(long, value_enum, default_value = "single")]
    pub precision: PrecisionArg,
}

impl TransformArgs {
    pub fn config(&self) -> ScatteringConfig {
        ScatteringConfig::new(self.j, self.l)
            .with_boundary(self.boundary.into())
            .with_precision(self.precision.into())
    }
}

#[derive(Args, Debug)]
pub struct ForwardArgs {
    /// Input images (PNG, PPM/PGM or RAWF).
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub transform: TransformArgs,
    /// Output file for one input, directory for several.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    /// Target image, or an SCT1 file with its coefficients.
    pub target: PathBuf,
    #[command(flatten)]
    pub transform: TransformArgs,
    #[arg(long, default_value_t = 200)]
    pub iters: usize,
    /// Adam step size.
    #[arg(long, default_value_t = 0.1)]
    pub step: f64,
    /// Variance of the starting noise.
    #[arg(long, default_value_t = 1e-4)]
    pub noise: f64,
    /// Optimize RGB directly instead of YUV.
    #[arg(long)]
    pub rgb: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// CSV of loss and err_S per iteration.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FiltersArgs {
    /// Grid size of the filter bank.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long = "J", default_value_t = 2)]
    pub j: u32,
    #[arg(long = "L", default_value_t = 8)]
    pub l: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainConfigArgs {
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub weight_decay: f64,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Directory with one subdirectory of images per class.
    pub data: PathBuf,
    /// Held-out directory with the same classes.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[command(flatten)]
    pub transform: TransformArgs,
    #[command(flatten)]
    pub train: TrainConfigArgs,
    /// Train on raw pixels instead of scattering coefficients.
    #[arg(long)]
    pub pixels: bool,
    /// SLM1 model file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AttackArgs {
    /// SLM1 model trained on scattering coefficients.
    pub model: PathBuf,
    pub image: PathBuf,
    /// Class to reach; without it the attack only has to change the class.
    #[arg(long)]
    pub target: Option<usize>,
    /// Comma-separated ascending epsilons; default 0.0025 to 0.15 in steps of 0.0025.
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "single")]
    pub precision: PrecisionArg,
    /// Adversarial image, written on success.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// SLM1 model trained on scattering coefficients.
    pub model: PathBuf,
    /// CSV with the Ω₁ and Ω₂ energies.
    #[arg(long)]
    pub out: PathBuf,
    /// Keep this fraction of angular coefficients.
    #[arg(long)]
    pub sparsify: Option<f64>,
    /// Where to write the sparsified model.
    #[arg(long, requires = "sparsify")]
    pub sparse_out: Option<PathBuf>,
    /// Dataset to score the dense and sparsified models on.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "single")]
    pub precision: PrecisionArg,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Comma-separated image sizes.
    #[arg(long, value_delimiter = ',', default_value = "32")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 128)]
    pub batch: usize,
    #[command(flatten)]
    pub transform: TransformArgs,
    /// Size for the forward vs oracle comparison; 0 skips it.
    #[arg(long, default_value_t = 64)]
    pub oracle_size: usize,
    /// Size for the tree vs infix memory rows; 0 skips them.
    #[arg(long, default_value_t = 256)]
    pub memory_size: usize,
    /// CSV output; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SelftestArgs {
    /// JSON report; standard output when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, hide = true)]
    pub corrupt_filter: bool,
}

#[derive(Args, Debug)]
pub struct DatasetArgs {
    /// Output directory, or image file with --reference.
    #[arg(long)]
    pub out: PathBuf,
    /// Write the reference scene instead of the texture dataset.
    #[arg(long)]
    pub reference: bool,
    /// Image side in pixels; 32 for textures, 256 for the scene.
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long, default_value_t = 60)]
    pub per_class: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let workers = cli
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
    {
        eprintln!("error: cannot start worker pool: {e}");
        return ExitCode::from(1);
    }
    match commands::run(&cli, workers) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
