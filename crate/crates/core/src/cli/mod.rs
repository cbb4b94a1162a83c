//! The `niert` command line.
//!
//! Exit codes: 0 success, 2 usage, 3 I/O or malformed input, 4 numeric
//! failure, 5 shape or configuration mismatch.

pub mod commands;
pub mod config_file;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::NiertError;

pub use config_file::RunConfigFile;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_SHAPE: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "niert", version, about = "Scattered-data interpolation with a partial-attention transformer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a JSONL dataset of synthetic interpolation tasks.
    Gen(GenArgs),
    /// Train a model and write its checkpoint and report.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset; writes a metrics CSV.
    Eval(EvalArgs),
    /// Dump per-task predictions as JSONL.
    Predict(PredictArgs),
    /// Export attention weights of one head as a CSV grid.
    Attn(AttnArgs),
    /// Score a classical interpolator on a dataset.
    Baseline(BaselineArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Expr,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormArg {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Rbf,
    Idw,
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON run-configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output path; stdout when omitted, where that makes sense.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    #[arg(long = "dx")]
    pub d_x: Option<usize>,
    /// Total points per task.
    #[arg(long = "total-points", short = 'N')]
    pub total_points: Option<usize>,
    #[arg(long)]
    pub n_min: Option<usize>,
    #[arg(long)]
    pub n_max: Option<usize>,
    #[arg(long)]
    pub sigma_base: Option<f64>,
    #[arg(long)]
    pub components: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    /// Index of the first task in the generator stream.
    #[arg(long, default_value_t = 0)]
    pub first: u64,
    /// Generator stream id; distinct streams give disjoint task sets.
    #[arg(long, default_value_t = 0)]
    pub stream: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    /// Training dataset; tasks are generated on the fly when omitted.
    #[arg(long)]
    pub train_data: Option<PathBuf>,
    #[arg(long)]
    pub eval_data: Option<PathBuf>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub tasks_per_epoch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lr_decay: Option<f64>,
    #[arg(long, value_enum)]
    pub loss: Option<NormArg>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    /// Compute the loss on target points only.
    #[arg(long)]
    pub loss_targets_only: bool,
    /// Let every point attend to every point.
    #[arg(long)]
    pub vanilla_attention: bool,
    /// Continue training from this checkpoint.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Affine value normalization before training, `SCALE,SHIFT` or `auto`
    /// (maps the training data's value range onto [0, 1]).
    #[arg(long)]
    pub normalize: Option<String>,
    /// Report path; defaults to `<out>.report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    /// Score the ground truth itself.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long)]
    pub dump_predictions: Option<PathBuf>,
    #[arg(long)]
    pub bin_width: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct AttnArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset file holding exactly one task.
    #[arg(long)]
    pub task: PathBuf,
    /// Layer index from 0; defaults to the last layer.
    #[arg(long)]
    pub layer: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub head: usize,
    /// Observed-point indices to export; all when omitted.
    #[arg(long, value_delimiter = ',')]
    pub observed: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub method: MethodArg,
    #[arg(long)]
    pub data: PathBuf,
    /// Tikhonov term added to the RBF system diagonal.
    #[arg(long)]
    pub ridge: Option<f64>,
    /// Multiquadric shape parameter.
    #[arg(long)]
    pub shape_c: Option<f64>,
    /// IDW distance exponent.
    #[arg(long)]
    pub power: Option<f64>,
    #[arg(long)]
    pub dump_predictions: Option<PathBuf>,
    #[arg(long)]
    pub bin_width: Option<usize>,
}

/// Exit code for a library error.
pub fn exit_code(err: &NiertError) -> i32 {
    match err {
        NiertError::Io { .. } | NiertError::Format { .. } => EXIT_IO,
        NiertError::SingularSystem { .. }
        | NiertError::NonFiniteValue(_)
        | NiertError::NonFiniteLoss { .. }
        | NiertError::DegenerateFunction { .. }
        | NiertError::RejectedFunction { .. } => EXIT_NUMERIC,
        NiertError::ShapeMismatch(_)
        | NiertError::CheckpointMismatch(_)
        | NiertError::InvalidConfig(_)
        | NiertError::GraphNotRecorded => EXIT_SHAPE,
    }
}

/// A command failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<NiertError> for CliError {
    fn from(err: NiertError) -> Self {
        CliError {
            code: exit_code(&err),
            message: err.to_string(),
        }
    }
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

fn init_threads() {
    if let Some(n) = std::env::var("NIERT_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        // Fails only if a pool already exists, e.g. a second call in-process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    init_threads();
    match commands::dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
