//! `hybolib` — hyperbolic representation learning on the Lorentz model.
//!
//! Four subcommands: `verify` runs randomized numerical suites, `gen` writes
//! synthetic datasets, `train` fits a model and saves a checkpoint plus a
//! JSONL epoch log, `eval` scores a checkpoint. One JSON document per
//! invocation on stdout; everything human-facing on stderr.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{GraphTask, Precision};
use hybolib::Error;

#[derive(Parser)]
#[command(
    name = "hybolib",
    version,
    about = "Hyperbolic representation learning on the Lorentz model",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run randomized verification suites and print a JSON report.
    Verify(VerifyArgs),
    /// Generate a synthetic dataset (files plus manifest) into a directory.
    #[command(subcommand)]
    Gen(GenKind),
    /// Train a model; writes model.ckpt and log.jsonl to the output directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint and print one JSON metrics object.
    Eval(EvalArgs),
}

#[derive(Args)]
pub struct VerifyArgs {
    /// One of: manifold, theorem1, lemma1, lemma2, centroid, gradients, all.
    #[arg(long, default_value = "all")]
    pub suite: String,
    /// Random draws per check; 0 records a vacuous pass with a warning.
    #[arg(long, default_value_t = 500)]
    pub trials: usize,
    /// RNG seed (default: $HYBOLIB_SEED, then 0).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Subcommand)]
pub enum GenKind {
    /// Balanced-tree knowledge graph: train/valid/test triple TSVs.
    TreeKg {
        /// Children per internal node.
        #[arg(long, default_value_t = 3)]
        branching: usize,
        /// Tree depth below the root.
        #[arg(long, default_value_t = 3)]
        depth: usize,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Split-shuffle seed (default: $HYBOLIB_SEED, then 0).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Balanced binary tree with depth labels and structural node features.
    TreeGraph {
        /// Total node count.
        #[arg(long, default_value_t = 63)]
        nodes: usize,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Feature-noise seed (default: $HYBOLIB_SEED, then 0).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Two equal cliques joined by a single edge.
    Barbell {
        /// Total node count (even, at least 6).
        #[arg(long, default_value_t = 20)]
        nodes: usize,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Feature-noise seed (default: $HYBOLIB_SEED, then 0).
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Trainable / evaluable model families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModelKind {
    /// Knowledge-graph completion over entity embeddings.
    Kg,
    /// Graph convolution stack (link prediction or node classification).
    Gcn,
    /// Small masked-token transformer encoder.
    ToyTransformer,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Kg => "kg",
            ModelKind::Gcn => "gcn",
            ModelKind::ToyTransformer => "toy-transformer",
        }
    }
}

#[derive(Args)]
pub struct TrainArgs {
    /// What to train.
    #[arg(value_enum)]
    pub model: ModelKind,
    /// JSON run config; unknown keys are rejected. Flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory (kg and gcn; the transformer enumerates its own data).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory for model.ckpt and log.jsonl (default: current dir).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// RNG seed (default: config, then $HYBOLIB_SEED, then 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Examples per optimizer step.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Negative samples per positive (kg).
    #[arg(long)]
    pub negatives: Option<usize>,
    /// Learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Triplet score margin (kg).
    #[arg(long)]
    pub margin: Option<f64>,
    /// Sigmoid-gain init for convolution layers (gcn).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Embedding norm cap (only the config's `"max_norm": null` disables it).
    #[arg(long)]
    pub max_norm: Option<f64>,
    /// Gradient norm clip (only the config's `"max_grad_norm": null` disables it).
    #[arg(long)]
    pub max_grad_norm: Option<f64>,
    /// Epochs between validation passes.
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Evaluations without improvement before early stop.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Riemannian SGD instead of the default Adam update.
    #[arg(long)]
    pub riemannian: bool,
    /// Spatial dimensionality of every representation.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Convolution layers (gcn).
    #[arg(long)]
    pub layers: Option<usize>,
    /// Attention heads (toy-transformer); must divide --dim.
    #[arg(long)]
    pub heads: Option<usize>,
    /// Encoder blocks (toy-transformer).
    #[arg(long)]
    pub blocks: Option<usize>,
    /// Token alphabet size (toy-transformer).
    #[arg(long)]
    pub vocab: Option<usize>,
    /// Sequence length (toy-transformer).
    #[arg(long)]
    pub seq_len: Option<usize>,
    /// Manifold curvature (negative).
    #[arg(long, allow_hyphen_values = true)]
    pub curvature: Option<f64>,
    /// Floating-point width.
    #[arg(long, value_enum)]
    pub precision: Option<Precision>,
    /// Graph objective (gcn): lp or nc.
    #[arg(long, value_enum)]
    pub task: Option<GraphTask>,
}

#[derive(Args)]
pub struct EvalArgs {
    /// What the checkpoint holds.
    #[arg(value_enum)]
    pub model: ModelKind,
    /// Checkpoint file written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset directory (kg and gcn; the transformer re-enumerates its own).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Floating-point width (default: whatever the checkpoint stores).
    #[arg(long, value_enum)]
    pub precision: Option<Precision>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Verify(args) => run::cmd_verify(args),
        Command::Gen(kind) => run::cmd_gen(kind),
        Command::Train(args) => run::cmd_train(args),
        Command::Eval(args) => run::cmd_eval(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Non-finite numbers are a numerical abort (3); everything else a caller can
/// fix — flags, config, data, checkpoints — is a usage error (2).
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NonFinite { .. } => 3,
        _ => 2,
    }
}
