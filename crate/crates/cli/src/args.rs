//! Command-line flags.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use semeq_core::agents::EncoderKind;
use semeq_core::anchors::{AnchorMethod, DEFAULT_SUPPORT_SIZE};
use semeq_core::eval::InverseMethod;
use semeq_core::relative::Similarity;

#[derive(Debug, Parser)]
#[command(
    name = "semeq",
    version,
    about = "Semantic channel equalization through relative representations"
)]
pub struct Cli {
    /// Global seed; every stage derives its own seed from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a Gaussian-mixture classification dataset.
    GenData(GenDataArgs),
    /// Build an encoder and train its linear decoder.
    TrainAgent(TrainAgentArgs),
    /// Select an anchor support and encode it with one agent.
    Anchors(AnchorsArgs),
    /// Equalize a single transmitter latent.
    Equalize(EqualizeArgs),
    /// Evaluate one transmitter/receiver pair and write a report row.
    Evaluate(EvaluateArgs),
    /// Evaluate a grid of anchor settings.
    Sweep(SweepArgs),
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, value_parser = positive)]
    pub classes: usize,
    #[arg(long, value_parser = positive)]
    pub dim: usize,
    /// Training samples per class.
    #[arg(long, value_parser = positive)]
    pub per_class: usize,
    /// Extra samples per class written to `<out>/test`.
    #[arg(long, default_value_t = 0)]
    pub test_per_class: usize,
    #[arg(long, default_value_t = 8.0)]
    pub separation: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainAgentArgs {
    /// Training dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Dataset on which matched accuracy is reported. Defaults to `--data`.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub id: String,
    #[arg(long)]
    pub kind: EncoderKind,
    /// Defaults to the input dimension.
    #[arg(long, value_parser = positive)]
    pub latent_dim: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long, default_value_t = 300, value_parser = positive)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    /// Explicit encoder seed instead of one derived from `--seed` and `--id`.
    #[arg(long)]
    pub agent_seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnchorsArgs {
    /// Agent whose anchors are written. Prototypical supports cluster its latents.
    #[arg(long)]
    pub agent: PathBuf,
    /// Dataset the support is drawn from.
    #[arg(long, required_unless_present = "support", conflicts_with = "support")]
    pub data: Option<PathBuf>,
    /// Reuse an existing support directory instead of selecting a new one.
    #[arg(long)]
    pub support: Option<PathBuf>,
    #[arg(long, default_value = "proto")]
    pub method: AnchorMethod,
    #[arg(long, value_parser = positive, required_unless_present = "support")]
    pub count: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SUPPORT_SIZE, value_parser = positive)]
    pub support_size: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct InverseArgs {
    #[arg(long, default_value_t = 1000, value_parser = positive)]
    pub max_iter: usize,
    /// Adam step size in units of the mean anchor norm.
    #[arg(long, default_value_t = 0.01)]
    pub inverse_lr: f64,
    #[arg(long, default_value_t = 1e-12)]
    pub early_stop: f64,
}

#[derive(Debug, Args)]
pub struct EqualizeArgs {
    #[arg(long)]
    pub tx_anchors: PathBuf,
    #[arg(long)]
    pub rx_anchors: PathBuf,
    #[arg(long, default_value = "euclidean")]
    pub similarity: Similarity,
    #[arg(long, default_value = "gradient")]
    pub inverse: InverseMethod,
    /// Comma-separated transmitter latent.
    #[arg(long, allow_hyphen_values = true)]
    pub latent: String,
    /// Receiver agent; when given its decision on the result is printed.
    #[arg(long)]
    pub rx: Option<PathBuf>,
    #[command(flatten)]
    pub inverse_args: InverseArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub tx: PathBuf,
    #[arg(long)]
    pub rx: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, default_value = "euclidean")]
    pub similarity: Similarity,
    #[arg(long, default_value = "gradient")]
    pub inverse: InverseMethod,
    /// Stored transmitter anchors.
    #[arg(long, requires = "rx_anchors", conflicts_with_all = ["data", "count"])]
    pub tx_anchors: Option<PathBuf>,
    /// Stored receiver anchors, encoded from the same support.
    #[arg(long, requires = "tx_anchors")]
    pub rx_anchors: Option<PathBuf>,
    /// Build the anchors from this dataset instead, exactly as a sweep cell
    /// with seed `--seed` would.
    #[arg(long, requires = "count", required_unless_present = "tx_anchors")]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "proto")]
    pub method: AnchorMethod,
    #[arg(long, value_parser = positive)]
    pub count: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SUPPORT_SIZE, value_parser = positive)]
    pub support_size: usize,
    #[command(flatten)]
    pub inverse_args: InverseArgs,
    /// Report CSV path.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional per-sample scatter CSV path.
    #[arg(long)]
    pub scatter: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Run configuration: generates data, trains both agents and sweeps.
    #[arg(long, conflicts_with_all = ["tx", "rx", "data", "test"])]
    pub config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    pub tx: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    pub rx: Option<PathBuf>,
    /// Dataset the anchor supports are drawn from.
    #[arg(long, required_unless_present = "config")]
    pub data: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    pub test: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', required_unless_present = "config", value_parser = positive)]
    pub counts: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "random,proto")]
    pub methods: Vec<AnchorMethod>,
    #[arg(long, value_delimiter = ',', default_value = "euclidean")]
    pub similarities: Vec<Similarity>,
    #[arg(long = "inverse", value_delimiter = ',', default_value = "gradient")]
    pub inverse_methods: Vec<InverseMethod>,
    /// Explicit cell seeds. Overrides `--repeats`.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Number of replicate seeds derived from `--seed`.
    #[arg(long, default_value_t = 1, value_parser = positive)]
    pub repeats: usize,
    #[arg(long, default_value_t = DEFAULT_SUPPORT_SIZE, value_parser = positive)]
    pub support_size: usize,
    #[command(flatten)]
    pub inverse_args: InverseArgs,
    /// Output directory for `sweep.csv` and `scatter.csv`.
    #[arg(long, required_unless_present = "config")]
    pub out: Option<PathBuf>,
}
