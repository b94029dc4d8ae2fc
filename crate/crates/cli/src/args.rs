use std::path::PathBuf;

use attnup::fast::bench::BenchOp;
use attnup::models::UpsampleKind;
use attnup::train::LossKind;
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "attnup",
    version,
    about = "Attention-based upsampling: training, evaluation and benchmarks",
    args_override_self = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Train a single-image super-resolution network on luminance patches
    TrainSisr(TrainSisrArgs),
    /// Score a super-resolution checkpoint or a folder of predictions
    EvalSisr(EvalSisrArgs),
    /// Train a guided depth upsampling network
    TrainJoint(TrainJointArgs),
    /// Score a joint upsampling checkpoint or a folder of predictions
    EvalJoint(EvalJointArgs),
    /// Upscale one image (or one depth map with its guide) with a checkpoint
    Upsample(UpsampleArgs),
    /// Time reference and fast upsampling kernels and write a CSV
    Bench(BenchArgs),
    /// Compare analytic gradients with central differences
    Gradcheck(GradcheckArgs),
    /// Print parameter and FLOP counts
    Params(ParamsArgs),
}

#[derive(Args, Debug)]
pub struct ConfigArg {
    /// File of `key = value` lines setting any flag; the command line wins
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ThreadsArg {
    /// Worker threads [default: all cores]
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScheduleKind {
    /// Multiply by --plateau-factor when the eval loss stalls
    Plateau,
    /// Multiply by --decay-factor at each milestone epoch
    Step,
}

#[derive(Args, Debug)]
pub struct TrainFlags {
    /// Manifest with `train` and `eval` records
    #[arg(long, value_name = "PATH")]
    pub manifest: PathBuf,
    /// Directory for checkpoints, metrics.csv and config.txt
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Mini-batch size [default: 20 for train-sisr, 10 for train-joint]
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long, default_value_t = 2000)]
    pub epochs: usize,
    /// Stop after this many optimiser steps
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Learning-rate schedule [default: plateau for train-sisr, step for train-joint]
    #[arg(long, value_enum)]
    pub schedule: Option<ScheduleKind>,
    /// Step-decay epochs
    #[arg(long, value_delimiter = ',', default_value = "1200,1600", action = ArgAction::Set)]
    pub milestones: Vec<usize>,
    #[arg(long, default_value_t = 0.1)]
    pub decay_factor: f64,
    #[arg(long, default_value_t = 0.8)]
    pub plateau_factor: f64,
    /// Evals without relative improvement before a plateau decay
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    /// Relative improvement that resets the plateau counter
    #[arg(long, default_value_t = 1e-4)]
    pub plateau_threshold: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = LossKind::Mse)]
    pub loss: LossKind,
    /// Low-resolution patch side [default: 32 at 2×, 16 otherwise]
    #[arg(long)]
    pub patch: Option<usize>,
    /// Patch stride in low-resolution pixels [default: 16 at 2×, 8 otherwise]
    #[arg(long)]
    pub stride: Option<usize>,
    /// Downscale and rotation augmentation [default: true for train-sisr, false for train-joint]
    #[arg(long)]
    pub augment: Option<bool>,
    #[arg(long, value_delimiter = ',', default_value = "0.9,0.8,0.7,0.6", action = ArgAction::Set)]
    pub aug_scales: Vec<f64>,
    /// Quarter turns applied to the original image
    #[arg(long, value_delimiter = ',', default_value = "1,2,3", action = ArgAction::Set)]
    pub aug_rotations: Vec<usize>,
    /// Also rotate the downscaled copies
    #[arg(long, default_value_t = false, action = ArgAction::Set)]
    pub aug_compose: bool,
    /// Write epoch_N.atup every N epochs (0 = never)
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: usize,
}

#[derive(Args, Debug)]
pub struct SisrFlags {
    /// Upsampling factor (power of two)
    #[arg(long, default_value_t = 2)]
    pub scale: usize,
    /// Feature width F
    #[arg(long, default_value_t = 32)]
    pub features: usize,
    #[arg(long, default_value_t = UpsampleKind::Attention)]
    pub upsample: UpsampleKind,
    #[arg(long, default_value_t = 5)]
    pub stem_kernel: usize,
    #[arg(long, default_value_t = 3)]
    pub res_kernel: usize,
    /// Attention window or deconvolution kernel size
    #[arg(long, default_value_t = 3)]
    pub up_kernel: usize,
    #[arg(long, default_value_t = 3)]
    pub final_kernel: usize,
    /// Divide attention logits by sqrt(F)
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub scale_logits: bool,
}

#[derive(Args, Debug)]
pub struct TrainSisrArgs {
    #[command(flatten)]
    pub model: SisrFlags,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub threads: ThreadsArg,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Args, Debug)]
pub struct JointFlags {
    /// SA_M1_F8, SA_M1_F16, SA_M1_F32 or SA_M2_F32
    #[arg(long, default_value = "SA_M1_F8")]
    pub preset: String,
    /// Upsampling factor (power of two)
    #[arg(long, default_value_t = 4)]
    pub factor: usize,
    #[arg(long, default_value_t = 3)]
    pub attn_kernel: usize,
    /// One mixing CNN for all stages
    #[arg(long, default_value_t = false, action = ArgAction::Set)]
    pub share_mixer: bool,
    /// Divide attention logits by sqrt(F)
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub scale_logits: bool,
}

#[derive(Args, Debug)]
pub struct DepthScaleArg {
    /// Stored depth counts per network unit
    #[arg(long, default_value_t = attnup::train::DEFAULT_DEPTH_SCALE)]
    pub depth_scale: f64,
}

#[derive(Args, Debug)]
pub struct TrainJointArgs {
    #[command(flatten)]
    pub model: JointFlags,
    #[command(flatten)]
    pub depth: DepthScaleArg,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub threads: ThreadsArg,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
pub struct Source {
    /// Checkpoint to run on every eval record
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
    /// Directory of precomputed outputs named after each eval target
    #[arg(long, value_name = "DIR")]
    pub predictions: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalFlags {
    /// Manifest whose `eval` records are scored
    #[arg(long, value_name = "PATH")]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub source: Source,
    /// Also score the bicubic baseline
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub baseline: bool,
    /// Write the per-image table as CSV
    #[arg(long, value_name = "PATH")]
    pub csv: Option<PathBuf>,
    /// Write model outputs here
    #[arg(long, value_name = "DIR")]
    pub save_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalSisrArgs {
    #[command(flatten)]
    pub eval: EvalFlags,
    /// Upsampling factor [default: from the checkpoint, else 2]
    #[arg(long)]
    pub scale: Option<usize>,
    #[command(flatten)]
    pub threads: ThreadsArg,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Args, Debug)]
pub struct EvalJointArgs {
    #[command(flatten)]
    pub eval: EvalFlags,
    /// Upsampling factor [default: from the checkpoint, else 4]
    #[arg(long)]
    pub factor: Option<usize>,
    #[command(flatten)]
    pub depth: DepthScaleArg,
    #[command(flatten)]
    pub threads: ThreadsArg,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Args, Debug)]
pub struct UpsampleArgs {
    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,
    /// PNG image, or 16-bit PGM low-resolution depth for joint checkpoints
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
    /// High-resolution guide PNG (joint checkpoints only)
    #[arg(long, value_name = "PATH")]
    pub guide: Option<PathBuf>,
    /// Output PNG, or PGM for joint checkpoints
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    #[command(flatten)]
    pub depth: DepthScaleArg,
    #[command(flatten)]
    pub threads: ThreadsArg,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// CSV destination [default: stdout]
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "attention_ref,attention_fast,deconv_ref,deconv_fast",
        action = ArgAction::Set
    )]
    pub ops: Vec<BenchOp>,
    #[arg(long, default_value_t = 32)]
    pub cin: usize,
    #[arg(long, default_value_t = 32)]
    pub cout: usize,
    #[arg(long, default_value_t = 128)]
    pub height: usize,
    #[arg(long, default_value_t = 128)]
    pub width: usize,
    #[arg(long, default_value_t = 2)]
    pub stride: usize,
    #[arg(long, default_value_t = 3)]
    pub kernel: usize,
    /// Thread counts to sweep
    #[arg(long, value_delimiter = ',', default_value = "1", action = ArgAction::Set)]
    pub threads: Vec<usize>,
    /// Timed repetitions per configuration
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Central-difference step
    #[arg(long, default_value_t = 1e-4)]
    pub eps: f64,
    /// Largest accepted |analytic − numeric| / max(1, |analytic|)
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    /// Coordinates sampled per parameter
    #[arg(long, default_value_t = 200)]
    pub max_coords: usize,
    #[command(flatten)]
    pub threads: ThreadsArg,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Args, Debug)]
pub struct ParamsArgs {
    #[arg(long, default_value_t = 64)]
    pub cin: usize,
    #[arg(long, default_value_t = 64)]
    pub cout: usize,
    /// Kernel / window size
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Stride for the per-layer FLOP line
    #[arg(long, default_value_t = 2)]
    pub stride: usize,
    /// Input side for FLOP counts
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// SISR feature width for the model table
    #[arg(long, default_value_t = 32)]
    pub features: usize,
    /// SISR factors for the model table
    #[arg(long, value_delimiter = ',', default_value = "2,4,8", action = ArgAction::Set)]
    pub scales: Vec<usize>,
    #[command(flatten)]
    pub config: ConfigArg,
}
