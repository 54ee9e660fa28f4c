//! Run configuration: a single JSON object covering optimizer and model
//! hyperparameters for every trainable model kind.
//!
//! Unknown keys are rejected outright — a typo like `"epcohs"` should fail
//! loudly instead of silently training with the default. Every field has a
//! default, so `{}` is a valid config and command-line flags can override
//! any subset.

use hybolib::training::TrainConfig;
use hybolib::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Floating-point width used for parameters and arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn name(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }
}

/// Which objective a graph model trains against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum GraphTask {
    /// Link prediction: score held-out edges against sampled non-edges.
    Lp,
    /// Node classification: nearest-prototype labels on a supervised split.
    Nc,
}

impl GraphTask {
    pub fn name(self) -> &'static str {
        match self {
            GraphTask::Lp => "lp",
            GraphTask::Nc => "nc",
        }
    }
}

// Serde needs defaults as free functions; keep them next to the struct so a
// change stays in one place. Optimizer defaults mirror `TrainConfig::default`.
fn d_epochs() -> usize {
    300
}
fn d_batch_size() -> usize {
    1000
}
fn d_negatives() -> usize {
    8
}
fn d_lr() -> f64 {
    5e-3
}
fn d_margin() -> f64 {
    8.0
}
fn d_lambda() -> f64 {
    2.5
}
fn d_max_norm() -> Option<f64> {
    Some(1.5)
}
fn d_max_grad_norm() -> Option<f64> {
    Some(0.5)
}
fn d_eval_every() -> usize {
    10
}
fn d_patience() -> usize {
    20
}
fn d_dim() -> usize {
    16
}
fn d_layers() -> usize {
    2
}
fn d_heads() -> usize {
    2
}
fn d_blocks() -> usize {
    2
}
fn d_vocab() -> usize {
    12
}
fn d_seq_len() -> usize {
    6
}
fn d_curvature() -> f64 {
    -1.0
}
fn d_precision() -> Precision {
    Precision::F64
}
fn d_task() -> GraphTask {
    GraphTask::Lp
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    // ── optimizer / schedule ────────────────────────────────────────────
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_batch_size")]
    pub batch_size: usize,
    /// Negative samples per positive (knowledge-graph training).
    #[serde(default = "d_negatives")]
    pub negatives: usize,
    #[serde(default = "d_lr")]
    pub lr: f64,
    /// Margin δ added to every triplet score.
    #[serde(default = "d_margin")]
    pub margin: f64,
    /// Sigmoid-gain init λ for graph-convolution layers.
    #[serde(default = "d_lambda")]
    pub lambda: f64,
    /// Cap on embedding spatial norms; `null` disables the cap.
    #[serde(default = "d_max_norm")]
    pub max_norm: Option<f64>,
    /// Global gradient-norm clip; `null` disables clipping.
    #[serde(default = "d_max_grad_norm")]
    pub max_grad_norm: Option<f64>,
    #[serde(default = "d_eval_every")]
    pub eval_every: usize,
    /// Early-stop patience, counted in evaluations without improvement.
    #[serde(default = "d_patience")]
    pub patience: usize,
    /// Use the Riemannian SGD update instead of Adam-on-parameters.
    #[serde(default)]
    pub riemannian: bool,

    // ── model shape ─────────────────────────────────────────────────────
    /// Spatial dimensionality of every representation.
    #[serde(default = "d_dim")]
    pub dim: usize,
    /// Stacked convolution layers (graph model).
    #[serde(default = "d_layers")]
    pub layers: usize,
    /// Attention heads (transformer); must divide `dim`.
    #[serde(default = "d_heads")]
    pub heads: usize,
    /// Encoder blocks (transformer).
    #[serde(default = "d_blocks")]
    pub blocks: usize,
    /// Token alphabet size (transformer); the mask id is `vocab` itself.
    #[serde(default = "d_vocab")]
    pub vocab: usize,
    /// Sequence length for the masked-token task.
    #[serde(default = "d_seq_len")]
    pub seq_len: usize,
    /// Manifold curvature; must be negative.
    #[serde(default = "d_curvature")]
    pub curvature: f64,
    #[serde(default = "d_precision")]
    pub precision: Precision,
    /// Graph objective: `lp` or `nc`.
    #[serde(default = "d_task")]
    pub task: GraphTask,

    // ── run wiring ──────────────────────────────────────────────────────
    /// Dataset directory (kg and graph models read it; transformer ignores it).
    #[serde(default)]
    pub data: Option<PathBuf>,
    /// Output directory for the checkpoint and epoch log.
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Seed; flags take precedence, then this, then `HYBOLIB_SEED`, then 0.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config must deserialize")
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Checks the fields the core library does not see until too late.
    /// Optimizer fields are re-validated by the trainer itself.
    pub fn validate(&self) -> Result<()> {
        if !self.curvature.is_finite() || self.curvature >= 0.0 {
            return Err(Error::Config(format!(
                "curvature must be finite and negative, got {}",
                self.curvature
            )));
        }
        if self.dim == 0 {
            return Err(Error::Config("dim must be ≥ 1".into()));
        }
        if self.layers == 0 {
            return Err(Error::Config("layers must be ≥ 1".into()));
        }
        if self.seq_len < 2 {
            return Err(Error::Config(
                "seq_len must be ≥ 2 (one visible token plus the mask)".into(),
            ));
        }
        Ok(())
    }

    /// The optimizer slice of this config, with the seed already resolved.
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            negatives: self.negatives,
            lr: self.lr,
            seed,
            margin: self.margin,
            lambda: self.lambda,
            max_norm: self.max_norm,
            max_grad_norm: self.max_grad_norm,
            eval_every: self.eval_every,
            patience: self.patience,
            riemannian: self.riemannian,
        }
    }
}

/// Seed precedence: explicit flag, then config file, then the `HYBOLIB_SEED`
/// environment variable, then 0.
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> Result<u64> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match std::env::var("HYBOLIB_SEED") {
        Ok(v) => v.trim().parse().map_err(|_| {
            Error::Config(format!(
                "HYBOLIB_SEED must be an unsigned integer, got {v:?}"
            ))
        }),
        Err(_) => Ok(0),
    }
}
