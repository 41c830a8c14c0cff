use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kws_core::features::FeatureMode;
use kws_core::harness::VatMode;
use kws_core::model::Variant;
use kws_core::optim::{InitKind, OptimizerKind};

/// Keyword spotting with spectrogram images and small CNNs.
///
/// Any flag can also be given in a `--config` file as `flag = value`
/// (or `subcommand.flag = value`); flags on the command line win.
#[derive(Debug, Parser)]
#[command(name = "kws", version, args_override_self = true)]
pub struct Cli {
    /// Flat key=value file overlaid under the command-line flags.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a Speech Commands style directory into a train/validation manifest.
    Prepare(PrepareArgs),
    /// Write a synthetic corpus in the Speech Commands layout.
    Synth(SynthArgs),
    /// Turn manifest audio into a cached set of feature images.
    Featurize(FeaturizeArgs),
    /// Train one model on a feature cache.
    Train(TrainArgs),
    /// Score a checkpoint on a feature cache.
    Eval(EvalArgs),
    /// Repeat training across values of one parameter.
    Sweep(SweepArgs),
    /// Compare plain, dropout and adversarially augmented training.
    CompareVat(CompareVatArgs),
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct PrepareArgs {
    /// Dataset root with one folder per word and `_background_noise_`.
    #[arg(long)]
    pub data_dir: PathBuf,
    /// Output directory; the manifest is written to `<out>/manifest.tsv`.
    #[arg(long)]
    pub out: PathBuf,
    /// Fraction of word clips assigned to training.
    #[arg(long, default_value_t = 0.8)]
    pub split_ratio: f64,
    /// Silence examples per partition, as a fraction of its word clips.
    #[arg(long, default_value_t = 0.1)]
    pub silence_frac: f64,
    /// Keep at most this many clips per class (before splitting).
    #[arg(long)]
    pub max_per_class: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Utterances per command word.
    #[arg(long, default_value_t = 300)]
    pub per_word: usize,
    /// Utterances per filler word (these become UNKNOWN).
    #[arg(long, default_value_t = 60)]
    pub per_filler: usize,
    #[arg(long, default_value_t = 40)]
    pub speakers: u32,
    #[arg(long, default_value_t = 6)]
    pub noise_files: usize,
    /// Length of each background noise recording.
    #[arg(long, default_value_t = 10)]
    pub noise_seconds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Spectrogram,
    Mfcc,
    Amplitude,
}

impl From<ModeArg> for FeatureMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Spectrogram => FeatureMode::Spectrogram,
            ModeArg::Mfcc => FeatureMode::Mfcc,
            ModeArg::Amplitude => FeatureMode::AmplitudePlot,
        }
    }
}

#[derive(Debug, Clone, Args)]
#[command(args_override_self = true)]
pub struct FeatureOpts {
    #[arg(long, value_enum, default_value_t = ModeArg::Spectrogram)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 30)]
    pub window_ms: usize,
    #[arg(long, default_value_t = 10)]
    pub stride_ms: usize,
    /// Frequency buckets (or DCT coefficients for mfcc).
    #[arg(long, default_value_t = 40)]
    pub buckets: usize,
    /// Amplitude ratio of background noise mixed into every clip.
    #[arg(long, default_value_t = 0.0)]
    pub noise_ratio: f32,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct FeaturizeArgs {
    /// Manifest written by `kws prepare`.
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub features: FeatureOpts,
    /// Output directory for `train.kwsf` and `validation.kwsf`.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write every image as a PGM under `<out>/pgm`.
    #[arg(long)]
    pub dump_pgm: bool,
    /// Seed for picking noise windows.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModelArg {
    LowLatency,
    Mnist,
    Shallow,
    Deep,
}

impl From<ModelArg> for Variant {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::LowLatency => Variant::LowLatency,
            ModelArg::Mnist => Variant::MnistCnn,
            ModelArg::Shallow => Variant::ShallowCrm,
            ModelArg::Deep => Variant::DeepCrm,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OptimizerArg {
    Sgd,
    Adam,
}

impl From<OptimizerArg> for OptimizerKind {
    fn from(o: OptimizerArg) -> Self {
        match o {
            OptimizerArg::Sgd => OptimizerKind::Sgd,
            OptimizerArg::Adam => OptimizerKind::Adam,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InitArg {
    Xavier,
    TruncNormal,
}

impl From<InitArg> for InitKind {
    fn from(i: InitArg) -> Self {
        match i {
            InitArg::Xavier => InitKind::Xavier,
            InitArg::TruncNormal => InitKind::TruncatedNormal {
                std: InitKind::DEFAULT_STD,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VatArg {
    Off,
    Sign,
    Fgsm,
    Std,
    Both,
}

impl From<VatArg> for VatMode {
    fn from(v: VatArg) -> Self {
        match v {
            VatArg::Off => VatMode::Off,
            VatArg::Sign => VatMode::Sign,
            VatArg::Fgsm => VatMode::Fgsm,
            VatArg::Std => VatMode::Std,
            VatArg::Both => VatMode::Both,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ActivationArg {
    Relu,
    Elu,
    Sigmoid,
    Tanh,
}

#[derive(Debug, Clone, Args)]
#[command(args_override_self = true)]
pub struct TrainOpts {
    #[arg(long, value_enum, default_value_t = ModelArg::LowLatency)]
    pub model: ModelArg,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Adam)]
    pub optimizer: OptimizerArg,
    #[arg(long, value_enum, default_value_t = InitArg::Xavier)]
    pub init: InitArg,
    /// Learning rate [default: 0.01 for sgd, 0.001 for adam]
    #[arg(long)]
    pub lr: Option<f32>,
    /// Epoch horizon.
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    /// Stop once an epoch's mean training cost reaches this value.
    #[arg(long)]
    pub cost_threshold: Option<f64>,
    /// Enable dropout with this keep probability.
    #[arg(long)]
    pub dropout_keep: Option<f64>,
    #[arg(long, value_enum, default_value_t = VatArg::Off)]
    pub vat: VatArg,
    /// Magnitude of the sign perturbation.
    #[arg(long, default_value_t = 0.001)]
    pub sign_epsilon: f32,
    /// Subsample the augmented set back to the original size.
    #[arg(long)]
    pub equal_budget: bool,
    /// Hidden-layer nonlinearity.
    #[arg(long, value_enum, default_value_t = ActivationArg::Relu)]
    pub activation: ActivationArg,
    /// Stride the low-latency conv along frequency only.
    #[arg(long)]
    pub freq_stride_only: bool,
    /// Conv filter counts for the C-R-M models, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub filters: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct TrainArgs {
    /// Directory holding `train.kwsf` and `validation.kwsf`.
    #[arg(long)]
    pub features: PathBuf,
    #[command(flatten)]
    pub train: TrainOpts,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Validation,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Validation)]
    pub split: SplitArg,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SweepArgs {
    /// Feature cache directory (trainer parameters only).
    #[arg(long, conflicts_with = "manifest")]
    pub features: Option<PathBuf>,
    /// Manifest to featurize from; required for featurizer parameters.
    #[arg(long, alias = "refeaturize")]
    pub manifest: Option<PathBuf>,
    /// One of num_buckets, window_size, window_stride, noise_ratio, optimizer, init, vat.
    #[arg(long)]
    pub param: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<String>,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[command(flatten)]
    pub featurize: FeatureOpts,
    #[command(flatten)]
    pub train: TrainOpts,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct CompareVatArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[command(flatten)]
    pub train: TrainOpts,
    /// Seeds shared by every variant.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub seeds: Vec<u64>,
    /// Also run the gradient-sign variant.
    #[arg(long)]
    pub fgsm: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}
