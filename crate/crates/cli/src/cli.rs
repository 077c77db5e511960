use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use emgse_core::emg::ChannelSet;
use emgse_model::Variant;

#[derive(Debug, Parser)]
#[command(
    name = "emgse",
    about = "EMG-assisted speech enhancement pipeline",
    disable_version_flag = true
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Pipeline configuration file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Master seed; for `train` it overrides `train.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Worker threads. Outputs do not depend on this value.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,

    /// EMG channel configuration.
    #[arg(long, global = true, value_enum)]
    pub channels: Option<Channels>,

    /// Print crate and container format versions.
    #[arg(long)]
    pub version: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Channels {
    Full,
    Cheek,
}

impl From<Channels> for ChannelSet {
    fn from(c: Channels) -> Self {
        match c {
            Channels::Full => ChannelSet::Full,
            Channels::Cheek => ChannelSet::Cheek,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Emgse,
    #[value(name = "se-a")]
    SeA,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Emgse => Variant::Emgse,
            VariantArg::SeA => Variant::SeA,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with envelope-correlated EMG and noise banks.
    Synth,

    /// Import a raw 40-channel corpus into the manifest/EMGC layout.
    Import {
        #[arg(long)]
        src: PathBuf,
    },

    /// Expand a manifest and two noise banks into a mixture index.
    BuildDataset {
        #[arg(long)]
        manifest: PathBuf,
        /// Training noise bank [default: <manifest dir>/noise/train]
        #[arg(long)]
        train_noise: Option<PathBuf>,
        /// Test noise bank [default: <manifest dir>/noise/test]
        #[arg(long)]
        test_noise: Option<PathBuf>,
    },

    /// Fit feature normalizers on the training split.
    FitNorm {
        #[arg(long)]
        dataset: PathBuf,
        /// Fit only the audio normalizer (for audio-only models).
        #[arg(long)]
        audio_only: bool,
    },

    /// Train a model.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// Overrides `train.variant`.
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
        /// Normalizers from `fit-norm`; fitted on the fly when absent.
        #[arg(long)]
        norm: Option<PathBuf>,
    },

    /// Enhance one noisy file, or every test mixture of a dataset.
    Enhance {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, conflicts_with = "dataset", required_unless_present = "dataset")]
        noisy: Option<PathBuf>,
        /// EMG container recorded with the noisy file.
        #[arg(long, requires = "noisy")]
        emg: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },

    /// Score systems on the test mixtures.
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        /// `NAME=CHECKPOINT`, repeatable.
        #[arg(long = "system", required = true)]
        systems: Vec<String>,
    },

    /// Export fusion-layer latents under the clean, noisy and noisy+EMG conditions.
    ExportLatents {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Test mixture ids; defaults to the first `--count` at `--snr`.
        #[arg(long = "mixture")]
        mixtures: Vec<String>,
        #[arg(long, default_value_t = -10.0, allow_hyphen_values = true)]
        snr: f64,
        #[arg(long, default_value_t = 10)]
        count: usize,
    },
}
