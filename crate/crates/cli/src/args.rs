use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use form_core::data::DatasetKind;
use form_core::{Ablation, AdapterKind};

#[derive(Debug, Parser)]
#[command(
    name = "form",
    version,
    about = "Multi-modal rumor detection over conversation threads"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a corpus, drop retweets and write stratified folds.
    Prepare,
    /// Encode every thread into the feature cache.
    Encode,
    /// Cross-validated training; writes checkpoints and reports.
    Train,
    /// Re-score saved fold checkpoints on their test folds.
    Evaluate {
        /// Directory holding `fold<i>.ckpt` files [default: <out>/checkpoints]
        #[arg(long)]
        checkpoint_dir: Option<PathBuf>,
    },
    /// Cross-validate the four model variants.
    Ablate,
    /// Cross-validate over several values of k.
    SweepK {
        /// Comma-separated k values.
        #[arg(long = "k", value_delimiter = ',', default_value = "1,3,5,10", value_parser = parse_top_k)]
        k: Vec<usize>,
    },
    /// Per-thread selection weights and node probabilities from a checkpoint.
    Explain {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Restrict to these thread ids (repeatable).
        #[arg(long = "thread")]
        threads: Vec<String>,
    },
    /// Generate a planted-signal synthetic corpus into the data root.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 40)]
    pub threads: usize,
    #[arg(long, default_value_t = 10)]
    pub responses: usize,
    #[arg(long, default_value_t = 3)]
    pub signal_responses: usize,
    #[arg(long, default_value_t = 1.0)]
    pub signal_strength: f64,
    #[arg(long, default_value_t = 200)]
    pub vocab: usize,
    #[arg(long, default_value_t = 8)]
    pub tokens: usize,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_dataset)]
    pub dataset: Option<DatasetKind>,
    #[arg(long, global = true)]
    pub data_root: Option<PathBuf>,
    #[arg(long, global = true, env = "FORM_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_adapter)]
    pub adapter: Option<AdapterKind>,
    /// Artifact directory of the pretrained adapter.
    #[arg(long, global = true)]
    pub adapter_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub toy_text_dim: Option<usize>,
    #[arg(long, global = true)]
    pub toy_image_dim: Option<usize>,
    #[arg(long, global = true)]
    pub hidden: Option<usize>,
    #[arg(long, global = true)]
    pub mlp_hidden: Option<usize>,
    #[arg(long, global = true)]
    pub max_responses: Option<usize>,
    #[arg(long, global = true)]
    pub max_tokens: Option<usize>,
    #[arg(long, global = true)]
    pub max_objects: Option<usize>,
    #[arg(long, global = true, value_parser = parse_top_k)]
    pub top_k: Option<usize>,
    #[arg(long, global = true)]
    pub folds: Option<usize>,
    /// Use a fold file written by `prepare` instead of re-splitting.
    #[arg(long, global = true)]
    pub fold_file: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    pub validation_fraction: Option<f64>,
    #[arg(long, global = true, value_parser = parse_ablation)]
    pub ablation: Option<Ablation>,
    #[arg(long, global = true)]
    pub mask_padding: bool,
    #[arg(long, global = true)]
    pub untie_wz: bool,
    #[arg(long, global = true)]
    pub deterministic: bool,
}

fn parse_top_k(s: &str) -> Result<usize, String> {
    let k: usize = s.trim().parse().map_err(|e| format!("{e}"))?;
    if k < 1 {
        return Err("top-k must be ≥ 1".into());
    }
    Ok(k)
}

fn parse_dataset(s: &str) -> Result<DatasetKind, String> {
    s.parse().map_err(|e: form_core::FormError| e.to_string())
}

fn parse_adapter(s: &str) -> Result<AdapterKind, String> {
    s.parse().map_err(|e: form_core::FormError| e.to_string())
}

fn parse_ablation(s: &str) -> Result<Ablation, String> {
    s.parse().map_err(|e: form_core::FormError| e.to_string())
}
