//! Training loops shared by the task models: deterministic seeding, epoch
//! logging, validation-driven checkpoint selection, early stopping, and
//! divergence handling. Each trainer owns its model's batch assembly but all
//! bookkeeping goes through one harness so the contracts match everywhere:
//! the returned model is always the best validation checkpoint (the initial
//! parameters when training diverged before any evaluation), and the log has
//! one record per completed epoch.

pub mod optim;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::datasets::{Graph, LpSplit, MaskedSeq, NcSplit, TripletStore};
use crate::error::{Error, Result};
use crate::manifold::Curvature;
use crate::metrics::{macro_f1, roc_auc};
use crate::models::{
    GcnConfig, GcnModel, KgConfig, KgModel, ToyTransformer, TransformerConfig,
};
use crate::params::{Param, StepCtx};
use crate::scalar::Scalar;
use crate::tensor::{Tape, Tensor};

pub use optim::{Method, OptimizerState};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Zero is legal and returns the freshly initialized model.
    pub epochs: usize,
    pub batch_size: usize,
    /// Corrupted samples per positive triplet (knowledge-graph loss only).
    pub negatives: usize,
    pub lr: f64,
    pub seed: u64,
    /// Constant score offset δ added to every triplet score.
    pub margin: f64,
    /// Norm-scale of the gain-bearing layers (their gain initialization).
    pub lambda: f64,
    /// Cap on embedding row norms, re-projected after every step.
    pub max_norm: Option<f64>,
    /// Global gradient-norm clip across all parameters.
    pub max_grad_norm: Option<f64>,
    /// Epochs between validation passes.
    pub eval_every: usize,
    /// Non-improving validation passes tolerated before stopping.
    pub patience: usize,
    /// Use geodesic SGD instead of Adam on the chart.
    pub riemannian: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            batch_size: 1000,
            negatives: 8,
            lr: 5e-3,
            seed: 0,
            margin: 8.0,
            lambda: 2.5,
            max_norm: Some(1.5),
            max_grad_norm: Some(0.5),
            eval_every: 10,
            patience: 20,
            riemannian: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.batch_size == 0 {
            return bad("batch_size must be ≥ 1".into());
        }
        if self.negatives == 0 {
            return bad("negatives must be ≥ 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be positive and finite, got {}", self.lr));
        }
        if !self.margin.is_finite() {
            return bad(format!("margin must be finite, got {}", self.margin));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive and finite, got {}", self.lambda));
        }
        if let Some(m) = self.max_norm {
            if !(m > 0.0 && m.is_finite()) {
                return bad(format!("max_norm must be positive and finite, got {m}"));
            }
        }
        if let Some(m) = self.max_grad_norm {
            if !(m > 0.0 && m.is_finite()) {
                return bad(format!("max_grad_norm must be positive and finite, got {m}"));
            }
        }
        if self.eval_every == 0 {
            return bad("eval_every must be ≥ 1".into());
        }
        if self.patience == 0 {
            return bad("patience must be ≥ 1".into());
        }
        Ok(())
    }

    fn optimizer<T: Scalar>(&self, curv: Curvature<T>) -> OptimizerState<T> {
        if self.riemannian {
            OptimizerState::riemannian_sgd(self.lr, self.max_grad_norm, curv)
        } else {
            OptimizerState::adam(self.lr, self.max_grad_norm)
        }
    }
}

/// One epoch in the JSON-lines training log. `metric` is `{}` on epochs
/// without a validation pass.
#[derive(Debug, Clone, Serialize)]
pub struct LogRecord {
    pub epoch: usize,
    pub loss: f64,
    pub metric: serde_json::Value,
    pub wall_ms: u64,
}

pub struct TrainOutcome<M> {
    /// The best validation checkpoint; the final parameters when no
    /// validation ran; the initial ones when training diverged before any.
    pub model: M,
    pub log: Vec<LogRecord>,
    /// Best value of the task's primary validation metric, if any eval ran.
    pub best_metric: Option<f64>,
    /// Why training aborted early on non-finite numbers, if it did.
    pub divergence: Option<String>,
}

// ── shared bookkeeping ──────────────────────────────────────────────────────

struct Harness<T> {
    log: Vec<LogRecord>,
    best: Option<(f64, Vec<Vec<T>>)>,
    init: Vec<Vec<T>>,
    strikes: usize,
    patience: usize,
    divergence: Option<String>,
}

impl<T: Scalar> Harness<T> {
    fn new(cfg: &TrainConfig, params: &[&Param<T>]) -> Self {
        Harness {
            log: Vec::new(),
            best: None,
            init: params.iter().map(|p| p.values().to_vec()).collect(),
            strikes: 0,
            patience: cfg.patience,
            divergence: None,
        }
    }

    /// Track a validation result; returns true when patience is exhausted.
    fn observe(&mut self, value: f64, params: &[&Param<T>]) -> bool {
        let improved = self.best.as_ref().map_or(true, |(b, _)| value > *b);
        if improved {
            self.best = Some((value, params.iter().map(|p| p.values().to_vec()).collect()));
            self.strikes = 0;
            false
        } else {
            self.strikes += 1;
            self.strikes >= self.patience
        }
    }

    fn record(&mut self, epoch: usize, loss: f64, metric: serde_json::Value, started: Instant) {
        self.log.push(LogRecord {
            epoch,
            loss,
            metric,
            wall_ms: started.elapsed().as_millis() as u64,
        });
    }

    fn diverge(&mut self, msg: String) {
        self.divergence = Some(msg);
    }

    /// Restore the checkpoint the outcome contract promises.
    fn finish(self, params: &mut [&mut Param<T>]) -> (Vec<LogRecord>, Option<f64>, Option<String>) {
        let restore = |params: &mut [&mut Param<T>], snap: &[Vec<T>]| {
            for (p, values) in params.iter_mut().zip(snap) {
                p.set_values(values.clone());
            }
        };
        match (&self.best, &self.divergence) {
            (Some((_, snap)), _) => restore(params, snap),
            (None, Some(_)) => restore(params, &self.init),
            (None, None) => {}
        }
        (self.log, self.best.map(|(v, _)| v), self.divergence)
    }
}

/// Backward pass plus dense per-parameter gradient collection. Parameters the
/// step never touched get zero buffers.
fn collect_grads<'t, T: Scalar>(
    tape: &'t Tape<T>,
    ctx: &StepCtx<'t, T>,
    loss: &Tensor<'t, T>,
    params: &[&Param<T>],
) -> Result<Vec<Vec<T>>> {
    let grads = tape.backward(loss)?;
    Ok(params
        .iter()
        .map(|p| match ctx.binding(p) {
            Some(t) => grads.wrt_or_zeros(&t),
            None => vec![T::zero(); p.numel()],
        })
        .collect())
}

/// The per-batch outcome a trainer feeds its loop: either a finite loss and
/// its gradients, or the message that ends training.
enum StepResult<T> {
    Update(f64, Vec<Vec<T>>),
    Diverged(String),
}

fn apply_step<T: Scalar>(
    opt: &mut OptimizerState<T>,
    params: &mut [&mut Param<T>],
    grads: Vec<Vec<T>>,
) -> Result<Option<String>> {
    match opt.step(params, grads) {
        Ok(()) => Ok(None),
        Err(Error::NonFinite { what, param }) => {
            Ok(Some(format!("non-finite {what} in '{param}'")))
        }
        Err(e) => Err(e),
    }
}

// ── knowledge-graph completion ──────────────────────────────────────────────

pub fn train_kg<T: Scalar>(
    dim: usize,
    curv: Curvature<T>,
    cfg: &TrainConfig,
    data: &TripletStore,
) -> Result<TrainOutcome<KgModel<T>>> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(Error::InvalidArgument("the train split is empty".into()));
    }
    let kg_cfg = KgConfig {
        dim,
        margin: cfg.margin,
        max_norm: cfg.max_norm,
        ..KgConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = KgModel::new(data.num_entities(), data.num_relations(), curv, &kg_cfg, &mut rng)?;
    let mut opt = cfg.optimizer(curv);
    let filter = data.all_true();
    let mut harness = Harness::new(cfg, &model.params());

    let mut order: Vec<usize> = (0..data.train.len()).collect();
    'epochs: for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<[usize; 3]> = chunk.iter().map(|&i| data.train[i]).collect();
            let step_seed = rng.gen::<u64>();
            let step = {
                let tape = Tape::new();
                let ctx = StepCtx::train(&tape, step_seed);
                let loss = model.loss_t(&ctx, &batch, cfg.negatives)?;
                let value = loss.item().to_f64c();
                if value.is_finite() {
                    StepResult::Update(value, collect_grads(&tape, &ctx, &loss, &model.params())?)
                } else {
                    StepResult::Diverged(format!("non-finite loss at epoch {epoch}"))
                }
            };
            match step {
                StepResult::Diverged(msg) => {
                    harness.diverge(msg);
                    break 'epochs;
                }
                StepResult::Update(value, grads) => {
                    if let Some(msg) = apply_step(&mut opt, &mut model.params_mut(), grads)? {
                        harness.diverge(format!("{msg} at epoch {epoch}"));
                        break 'epochs;
                    }
                    loss_sum += value * batch.len() as f64;
                    seen += batch.len();
                }
            }
        }

        let mut metric = serde_json::json!({});
        let mut stop = false;
        if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) && !data.valid.is_empty() {
            let m = model.rank_metrics(&data.valid, &filter)?;
            metric = serde_json::to_value(&m)
                .map_err(|e| Error::InvalidArgument(format!("metric serialization: {e}")))?;
            stop = harness.observe(m.mrr, &model.params());
        }
        harness.record(epoch, loss_sum / seen.max(1) as f64, metric, started);
        if stop {
            break;
        }
    }

    let (log, best_metric, divergence) = harness.finish(&mut model.params_mut());
    Ok(TrainOutcome { model, log, best_metric, divergence })
}

// ── graph convolution ───────────────────────────────────────────────────────

pub enum GcnTask<'a> {
    LinkPrediction(&'a LpSplit),
    NodeClassification(&'a NcSplit),
}

pub fn train_gcn<T: Scalar>(
    dim: usize,
    layers: usize,
    curv: Curvature<T>,
    cfg: &TrainConfig,
    graph: &Graph,
    task: GcnTask<'_>,
) -> Result<TrainOutcome<GcnModel<T>>> {
    cfg.validate()?;
    let gcn_cfg = GcnConfig {
        dim,
        layers,
        gain_init: cfg.lambda,
        ..GcnConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // Link prediction splits the decoder supervision, not the graph:
    // message passing stays transductive over all edges. On a tree any
    // held-out edge is a bridge, so a train-only adjacency would disconnect
    // exactly the node pairs the validation set asks about.
    let (mut model, adjacency) = match &task {
        GcnTask::LinkPrediction(_) => {
            let model = GcnModel::link_prediction(graph.num_nodes, curv, &gcn_cfg, &mut rng)?;
            (model, graph.adjacency())
        }
        GcnTask::NodeClassification(_) => {
            let features: Vec<Vec<T>> = graph
                .features
                .iter()
                .map(|row| row.iter().map(|&v| T::c(v)).collect())
                .collect();
            let model = GcnModel::node_classification(
                features,
                graph.num_classes(),
                curv,
                &gcn_cfg,
                &mut rng,
            )?;
            (model, graph.adjacency())
        }
    };

    let mut opt = cfg.optimizer(curv);
    let mut harness = Harness::new(cfg, &model.params());

    'epochs: for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let step_seed = rng.gen::<u64>();
        // Toy graphs train full-batch: one forward over the whole graph.
        let step = {
            let tape = Tape::new();
            let ctx = StepCtx::train(&tape, step_seed);
            let reps = model.forward(&ctx, &adjacency)?;
            let loss = match &task {
                GcnTask::LinkPrediction(split) => {
                    model.lp_loss(&ctx, &reps, &split.train_pos, &split.train_neg)?
                }
                GcnTask::NodeClassification(split) => {
                    model.nc_loss(&ctx, &reps, &split.train, &graph.labels)?
                }
            };
            let value = loss.item().to_f64c();
            if value.is_finite() {
                StepResult::Update(value, collect_grads(&tape, &ctx, &loss, &model.params())?)
            } else {
                StepResult::Diverged(format!("non-finite loss at epoch {epoch}"))
            }
        };
        let value = match step {
            StepResult::Diverged(msg) => {
                harness.diverge(msg);
                break 'epochs;
            }
            StepResult::Update(value, grads) => {
                if let Some(msg) = apply_step(&mut opt, &mut model.params_mut(), grads)? {
                    harness.diverge(format!("{msg} at epoch {epoch}"));
                    break 'epochs;
                }
                value
            }
        };

        let mut metric = serde_json::json!({});
        let mut stop = false;
        if epoch % cfg.eval_every == 0 || epoch == cfg.epochs {
            let tape = Tape::new();
            let ctx = StepCtx::eval(&tape);
            let reps = model.forward(&ctx, &adjacency)?;
            let primary = match &task {
                GcnTask::LinkPrediction(split) => {
                    let pos = model.edge_scores(&ctx, &reps, &split.valid_pos)?;
                    let neg = model.edge_scores(&ctx, &reps, &split.valid_neg)?;
                    let auc = roc_auc(&pos, &neg);
                    metric = serde_json::json!({ "roc_auc": auc });
                    auc
                }
                GcnTask::NodeClassification(split) => {
                    let preds = model.predict_classes(&ctx, &reps, &split.valid)?;
                    let gold: Vec<usize> = split.valid.iter().map(|&i| graph.labels[i]).collect();
                    let f1 = macro_f1(&preds, &gold, graph.num_classes());
                    metric = serde_json::json!({ "f1": f1 });
                    f1
                }
            };
            stop = harness.observe(primary, &model.params());
        }
        harness.record(epoch, value, metric, started);
        if stop {
            break;
        }
    }

    let (log, best_metric, divergence) = harness.finish(&mut model.params_mut());
    Ok(TrainOutcome { model, log, best_metric, divergence })
}

// ── masked-token reconstruction ─────────────────────────────────────────────

pub fn train_transformer<T: Scalar>(
    model_cfg: &TransformerConfig,
    curv: Curvature<T>,
    cfg: &TrainConfig,
    train: &[MaskedSeq],
    valid: &[MaskedSeq],
) -> Result<TrainOutcome<ToyTransformer<T>>> {
    cfg.validate()?;
    if train.is_empty() || valid.is_empty() {
        return Err(Error::InvalidArgument(
            "need non-empty train and validation sequence sets".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = ToyTransformer::new(curv, model_cfg, &mut rng)?;
    let mut opt = cfg.optimizer(curv);
    let mut harness = Harness::new(cfg, &model.params());

    let mut order: Vec<usize> = (0..train.len()).collect();
    'epochs: for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<MaskedSeq> = chunk.iter().map(|&i| train[i].clone()).collect();
            let step_seed = rng.gen::<u64>();
            let step = {
                let tape = Tape::new();
                let ctx = StepCtx::train(&tape, step_seed);
                let loss = model.loss_t(&ctx, &batch)?;
                let value = loss.item().to_f64c();
                if value.is_finite() {
                    StepResult::Update(value, collect_grads(&tape, &ctx, &loss, &model.params())?)
                } else {
                    StepResult::Diverged(format!("non-finite loss at epoch {epoch}"))
                }
            };
            match step {
                StepResult::Diverged(msg) => {
                    harness.diverge(msg);
                    break 'epochs;
                }
                StepResult::Update(value, grads) => {
                    if let Some(msg) = apply_step(&mut opt, &mut model.params_mut(), grads)? {
                        harness.diverge(format!("{msg} at epoch {epoch}"));
                        break 'epochs;
                    }
                    loss_sum += value * batch.len() as f64;
                    seen += batch.len();
                }
            }
        }

        let mut metric = serde_json::json!({});
        let mut stop = false;
        if epoch % cfg.eval_every == 0 || epoch == cfg.epochs {
            let acc = model.accuracy(valid)?;
            metric = serde_json::json!({ "accuracy": acc });
            stop = harness.observe(acc, &model.params());
        }
        harness.record(epoch, loss_sum / seen.max(1) as f64, metric, started);
        if stop {
            break;
        }
    }

    let (log, best_metric, divergence) = harness.finish(&mut model.params_mut());
    Ok(TrainOutcome { model, log, best_metric, divergence })
}
