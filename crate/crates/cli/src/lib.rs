//! Command implementations behind the `brushgan` binary, usable from tests.

pub mod commands;

use std::path::PathBuf;

use clap::Args;

/// Exit status for malformed invocations and invalid option values.
pub const EXIT_USAGE: u8 = 2;
/// Exit status for unreadable or incomplete corpus, dictionary or checkpoint data.
pub const EXIT_DATA: u8 = 3;
/// Exit status when training produces a non-finite loss.
pub const EXIT_DIVERGENCE: u8 = 4;

/// Training configuration: a TOML file plus flag overrides (flags win).
#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "styles-count")]
    pub styles_count: Option<usize>,
    /// Style conditioning: onehot, embedding or disabled.
    #[arg(long)]
    pub mode: Option<String>,
    /// Any other config key, as `key=value`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Args, Debug)]
pub struct PrepareArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub dictionary: PathBuf,
    /// Output directory for the manifest, cache and statistics table.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long = "test-count", default_value_t = 1000)]
    pub test_count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "vocab-size", default_value_t = brushgan::components::DEFAULT_VOCAB_SIZE)]
    pub vocab_size: u16,
    /// Leave characters without a decomposition out instead of aborting.
    #[arg(long = "skip-missing")]
    pub skip_missing: bool,
    /// Skip writing the normalized-image cache.
    #[arg(long = "no-cache")]
    pub no_cache: bool,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub dictionary: PathBuf,
    /// Split manifest written by `prepare`.
    #[arg(long)]
    pub split: PathBuf,
    /// Normalized-image cache written by `prepare`.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Run directory for the metrics log and checkpoints.
    #[arg(long)]
    pub out: PathBuf,
    /// Resume from this checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Train a single style only.
    #[arg(long)]
    pub style: Option<u16>,
    /// Stop after this many steps in total (the run can be resumed later).
    #[arg(long = "max-steps")]
    pub max_steps: Option<u64>,
    /// Keep `best.ckpt` by SSIM on the test side of the split.
    #[arg(long)]
    pub validate: bool,
    #[arg(long = "skip-missing")]
    pub skip_missing: bool,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dictionary: PathBuf,
    /// Corpus root; source glyphs are read from its `source` directory.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Characters to generate, as one string.
    #[arg(long)]
    pub chars: String,
    #[arg(long)]
    pub style: u16,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long = "skip-missing")]
    pub skip_missing: bool,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long = "test-manifest", alias = "split")]
    pub test_manifest: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub dictionary: PathBuf,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Write the report as tab-separated values here as well.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub dictionary: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// `name style_mode components` per line; defaults to the four standard rows.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    /// Output table (tab-separated).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long = "skip-missing")]
    pub skip_missing: bool,
}
