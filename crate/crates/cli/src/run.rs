//! Command implementations behind the CLI surface.
//!
//! Every command returns the process exit code instead of exiting itself, so
//! `main` owns the single exit point: 0 success, 1 verification failure,
//! 2 usage/config/data error, 3 numerical abort. Each invocation prints one
//! JSON document to stdout; progress and diagnostics go to stderr.

use std::fs;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use hybolib::checkpoint::{self, Checkpoint};
use hybolib::datasets::{
    gen_barbell_graph, gen_masked_sequences, gen_tree_graph, gen_tree_kg, load_graph, lp_split,
    nc_split, write_graph, MaskedSeq, TripletStore,
};
use hybolib::manifold::Curvature;
use hybolib::metrics;
use hybolib::models::{GcnConfig, GcnModel, KgConfig, KgModel, ToyTransformer, TransformerConfig};
use hybolib::params::StepCtx;
use hybolib::tensor::Tape;
use hybolib::training::{train_gcn, train_kg, train_transformer, GcnTask, LogRecord, TrainOutcome};
use hybolib::verify::{self, Suite};
use hybolib::{Error, Result, Scalar, ScalarWidth};

use crate::config::{resolve_seed, GraphTask, Precision, RunConfig};
use crate::{EvalArgs, GenKind, ModelKind, TrainArgs, VerifyArgs};

// ── verify ──────────────────────────────────────────────────────────────

pub fn cmd_verify(args: &VerifyArgs) -> Result<u8> {
    let suites = Suite::parse(&args.suite).ok_or_else(|| {
        Error::Config(format!(
            "unknown suite {:?} (expected manifold, theorem1, lemma1, lemma2, \
             centroid, gradients, or all)",
            args.suite
        ))
    })?;
    let seed = resolve_seed(args.seed, None)?;
    let mut reports = Vec::with_capacity(suites.len());
    let mut all_pass = true;
    for suite in suites {
        let report = verify::run_suite(suite, seed, args.trials)?;
        eprintln!(
            "suite {:<9} {} ({} checks, {} ms)",
            report.suite,
            if report.pass { "pass" } else { "FAIL" },
            report.checks.len(),
            report.wall_ms
        );
        if let Some(warning) = &report.warning {
            eprintln!("  warning: {warning}");
        }
        for check in report.checks.iter().filter(|c| !c.pass) {
            eprintln!(
                "  {}: max err {:.3e} exceeds tol {:.0e} ({} trials)",
                check.name, check.max_err, check.tol, check.trials
            );
        }
        all_pass &= report.pass;
        reports.push(report);
    }
    let doc = json!({
        "seed": seed,
        "trials": args.trials,
        "pass": all_pass,
        "suites": reports,
    });
    println!("{}", serde_json::to_string_pretty(&doc).expect("report serializes"));
    Ok(if all_pass { 0 } else { 1 })
}

// ── gen ─────────────────────────────────────────────────────────────────

pub fn cmd_gen(kind: &GenKind) -> Result<u8> {
    let manifest = match kind {
        GenKind::TreeKg {
            branching,
            depth,
            out,
            seed,
        } => {
            let seed = resolve_seed(*seed, None)?;
            let m = gen_tree_kg(out, *branching, *depth, seed)?;
            eprintln!(
                "tree-kg: {} entities, {}/{}/{} train/valid/test triples → {}",
                m.entities,
                m.train,
                m.valid,
                m.test,
                out.display()
            );
            serde_json::to_value(&m)
        }
        GenKind::TreeGraph { nodes, out, seed } => {
            let seed = resolve_seed(*seed, None)?;
            let graph = gen_tree_graph(*nodes, seed)?;
            let m = write_graph(out, &graph, "tree", seed)?;
            eprintln!(
                "tree graph: {} nodes, {} edges, {} classes → {}",
                m.nodes,
                m.edges,
                m.classes,
                out.display()
            );
            serde_json::to_value(&m)
        }
        GenKind::Barbell { nodes, out, seed } => {
            let seed = resolve_seed(*seed, None)?;
            let graph = gen_barbell_graph(*nodes, seed)?;
            let m = write_graph(out, &graph, "barbell", seed)?;
            eprintln!(
                "barbell graph: {} nodes, {} edges → {}",
                m.nodes,
                m.edges,
                out.display()
            );
            serde_json::to_value(&m)
        }
    }
    .map_err(|e| Error::Config(format!("manifest serialization failed: {e}")))?;
    println!(
        "{}",
        serde_json::to_string_pretty(&manifest).expect("manifest serializes")
    );
    Ok(0)
}

// ── train ───────────────────────────────────────────────────────────────

pub fn cmd_train(args: &TrainArgs) -> Result<u8> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    apply_overrides(&mut cfg, args);
    cfg.validate()?;
    let seed = resolve_seed(args.seed, cfg.seed)?;
    match cfg.precision {
        Precision::F32 => train_impl::<f32>(args.model, &cfg, seed),
        Precision::F64 => train_impl::<f64>(args.model, &cfg, seed),
    }
}

fn apply_overrides(cfg: &mut RunConfig, args: &TrainArgs) {
    macro_rules! set {
        ($($field:ident),* $(,)?) => {
            $( if let Some(v) = args.$field.clone() { cfg.$field = v; } )*
        };
    }
    set!(
        epochs, batch_size, negatives, lr, margin, lambda, eval_every, patience, dim, layers,
        heads, blocks, vocab, seq_len, curvature, precision, task,
    );
    if let Some(path) = &args.data {
        cfg.data = Some(path.clone());
    }
    if let Some(path) = &args.out {
        cfg.out = Some(path.clone());
    }
    if args.riemannian {
        cfg.riemannian = true;
    }
    // Flags can tighten the norm caps but only the config file's `null`
    // can disable them.
    if let Some(v) = args.max_norm {
        cfg.max_norm = Some(v);
    }
    if let Some(v) = args.max_grad_norm {
        cfg.max_grad_norm = Some(v);
    }
}

/// What a finished (or aborted) run leaves behind, independent of model type.
struct Done {
    log: Vec<LogRecord>,
    best_metric: Option<f64>,
    divergence: Option<String>,
}

impl<M> From<TrainOutcome<M>> for Done {
    fn from(o: TrainOutcome<M>) -> Self {
        Done {
            log: o.log,
            best_metric: o.best_metric,
            divergence: o.divergence,
        }
    }
}

fn train_impl<T: Scalar>(model: ModelKind, cfg: &RunConfig, seed: u64) -> Result<u8> {
    let curv = Curvature::new(T::c(cfg.curvature))?;
    let tc = cfg.train_config(seed);
    let out_dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out_dir)?;
    let ckpt_path = out_dir.join("model.ckpt");
    let started = std::time::Instant::now();

    let done: Done = match model {
        ModelKind::Kg => {
            let data_dir = require_data(cfg, "knowledge-graph training")?;
            let store = TripletStore::load(&data_dir)?;
            eprintln!(
                "kg: {} entities, {} relations, {} train triples — dim {}, {} epochs, {}",
                store.num_entities(),
                store.num_relations(),
                store.train.len(),
                cfg.dim,
                cfg.epochs,
                T::WIDTH.name()
            );
            let out = train_kg::<T>(cfg.dim, curv, &tc, &store)?;
            let meta = json!({
                "kind": "kg",
                "dim": cfg.dim,
                "curvature": cfg.curvature,
                "entities": store.num_entities(),
                "relations": store.num_relations(),
                "margin": tc.margin,
                "max_norm": tc.max_norm,
            });
            checkpoint::save(&ckpt_path, &meta, &out.model.params())?;
            Done::from(out)
        }
        ModelKind::Gcn => {
            let data_dir = require_data(cfg, "graph training")?;
            let graph = load_graph(&data_dir)?;
            eprintln!(
                "gcn {}: {} nodes, {} edges — dim {}, {} layers, {} epochs, {}",
                cfg.task.name(),
                graph.num_nodes,
                graph.edges.len(),
                cfg.dim,
                cfg.layers,
                cfg.epochs,
                T::WIDTH.name()
            );
            let mut meta = json!({
                "kind": "gcn",
                "task": cfg.task.name(),
                "dim": cfg.dim,
                "layers": cfg.layers,
                "curvature": cfg.curvature,
                "lambda": tc.lambda,
                "nodes": graph.num_nodes,
                "split_seed": seed,
            });
            let out = match cfg.task {
                GraphTask::Lp => {
                    let split = lp_split(&graph, seed)?;
                    train_gcn::<T>(
                        cfg.dim,
                        cfg.layers,
                        curv,
                        &tc,
                        &graph,
                        GcnTask::LinkPrediction(&split),
                    )?
                }
                GraphTask::Nc => {
                    meta["classes"] = json!(graph.num_classes());
                    let split = nc_split(graph.num_nodes, seed);
                    train_gcn::<T>(
                        cfg.dim,
                        cfg.layers,
                        curv,
                        &tc,
                        &graph,
                        GcnTask::NodeClassification(&split),
                    )?
                }
            };
            checkpoint::save(&ckpt_path, &meta, &out.model.params())?;
            Done::from(out)
        }
        ModelKind::ToyTransformer => {
            let (train_set, valid_set) = masked_split(cfg.vocab, cfg.seq_len, seed)?;
            eprintln!(
                "toy-transformer: {}/{} train/valid sequences (vocab {}, len {}) — dim {}, \
                 {} blocks, {} epochs, {}",
                train_set.len(),
                valid_set.len(),
                cfg.vocab,
                cfg.seq_len,
                cfg.dim,
                cfg.blocks,
                cfg.epochs,
                T::WIDTH.name()
            );
            let model_cfg = TransformerConfig {
                dim: cfg.dim,
                heads: cfg.heads,
                blocks: cfg.blocks,
                vocab: cfg.vocab,
                max_len: cfg.seq_len,
                ..TransformerConfig::default()
            };
            let out = train_transformer::<T>(&model_cfg, curv, &tc, &train_set, &valid_set)?;
            let meta = json!({
                "kind": "toy-transformer",
                "dim": cfg.dim,
                "heads": cfg.heads,
                "blocks": cfg.blocks,
                "vocab": cfg.vocab,
                "seq_len": cfg.seq_len,
                "curvature": cfg.curvature,
                "split_seed": seed,
            });
            checkpoint::save(&ckpt_path, &meta, &out.model.params())?;
            Done::from(out)
        }
    };

    let log_path = out_dir.join("log.jsonl");
    let mut log_text = String::new();
    for record in &done.log {
        log_text.push_str(&serde_json::to_string(record).expect("log record serializes"));
        log_text.push('\n');
    }
    fs::write(&log_path, log_text)?;

    let summary = json!({
        "model": model.name(),
        "precision": T::WIDTH.name(),
        "seed": seed,
        "epochs_logged": done.log.len(),
        "best_metric": done.best_metric,
        "divergence": done.divergence,
        "checkpoint": ckpt_path.display().to_string(),
        "log": log_path.display().to_string(),
        "wall_ms": started.elapsed().as_millis() as u64,
    });
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));

    if let Some(why) = &done.divergence {
        eprintln!("numerical abort: {why} (checkpoint holds the last finite parameters)");
        return Ok(3);
    }
    match done.best_metric {
        Some(metric) => eprintln!(
            "done: {} epochs logged, best validation metric {metric:.4}",
            done.log.len()
        ),
        None => eprintln!("done: {} epochs logged, no evaluation ran", done.log.len()),
    }
    Ok(0)
}

fn require_data(cfg: &RunConfig, what: &str) -> Result<PathBuf> {
    cfg.data.clone().ok_or_else(|| {
        Error::Config(format!(
            "{what} needs a dataset directory (--data or the config's \"data\")"
        ))
    })
}

/// Deterministic shuffle-and-split of the full enumerated masked-sequence
/// family: 15% (at least one) held out for validation.
fn masked_split(vocab: usize, seq_len: usize, seed: u64) -> Result<(Vec<MaskedSeq>, Vec<MaskedSeq>)> {
    let mut all = gen_masked_sequences(vocab, seq_len, &[1, 2]);
    if all.len() < 2 {
        return Err(Error::Config(format!(
            "vocab {vocab} with seq_len {seq_len} enumerates only {} masked sequences; \
             need at least 2 to split",
            all.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    all.shuffle(&mut rng);
    let n_valid = ((all.len() as f64) * 0.15).round().max(1.0) as usize;
    let train = all.split_off(n_valid);
    Ok((train, all))
}

// ── eval ────────────────────────────────────────────────────────────────

pub fn cmd_eval(args: &EvalArgs) -> Result<u8> {
    let width = match args.precision {
        Some(Precision::F32) => ScalarWidth::F32,
        Some(Precision::F64) => ScalarWidth::F64,
        None => checkpoint::stored_scalar(&args.checkpoint)?,
    };
    match width {
        ScalarWidth::F32 => eval_impl::<f32>(args),
        ScalarWidth::F64 => eval_impl::<f64>(args),
    }
}

fn eval_impl<T: Scalar>(args: &EvalArgs) -> Result<u8> {
    let ckpt = checkpoint::load::<T>(&args.checkpoint)?;
    let kind = meta_str(&ckpt.model, "kind")?.to_string();
    if kind != args.model.name() {
        return Err(Error::Config(format!(
            "checkpoint {} holds a {kind} model, but {} evaluation was requested",
            args.checkpoint.display(),
            args.model.name()
        )));
    }
    let curv = Curvature::new(T::c(meta_f64(&ckpt.model, "curvature")?))?;
    let metrics_doc = match args.model {
        ModelKind::Kg => eval_kg::<T>(&ckpt, curv, args)?,
        ModelKind::Gcn => eval_gcn::<T>(&ckpt, curv, args)?,
        ModelKind::ToyTransformer => eval_transformer::<T>(&ckpt, curv)?,
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&metrics_doc).expect("metrics serialize")
    );
    Ok(0)
}

fn eval_kg<T: Scalar>(
    ckpt: &Checkpoint<T>,
    curv: Curvature<T>,
    args: &EvalArgs,
) -> Result<serde_json::Value> {
    let data_dir = args
        .data
        .as_ref()
        .ok_or_else(|| Error::Config("kg evaluation needs --data".into()))?;
    let store = TripletStore::load(data_dir)?;
    let entities = meta_usize(&ckpt.model, "entities")?;
    let relations = meta_usize(&ckpt.model, "relations")?;
    if store.num_entities() != entities || store.num_relations() != relations {
        return Err(Error::Config(format!(
            "dataset has {} entities / {} relations but the checkpoint was trained \
             on {entities} / {relations}",
            store.num_entities(),
            store.num_relations()
        )));
    }
    let kg_cfg = KgConfig {
        dim: meta_usize(&ckpt.model, "dim")?,
        margin: meta_f64(&ckpt.model, "margin")?,
        max_norm: meta_opt_f64(&ckpt.model, "max_norm")?,
        ..KgConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut model = KgModel::<T>::new(entities, relations, curv, &kg_cfg, &mut rng)?;
    checkpoint::restore(ckpt, &mut model.params_mut())?;
    let (split, queries) = if store.test.is_empty() {
        ("valid", &store.valid)
    } else {
        ("test", &store.test)
    };
    let m = model.rank_metrics(queries, &store.all_true())?;
    eprintln!("kg eval: {} queries on the {split} split", queries.len());
    Ok(json!({
        "split": split,
        "queries": queries.len(),
        "mrr": m.mrr,
        "hits1": m.hits1,
        "hits3": m.hits3,
        "hits10": m.hits10,
    }))
}

fn eval_gcn<T: Scalar>(
    ckpt: &Checkpoint<T>,
    curv: Curvature<T>,
    args: &EvalArgs,
) -> Result<serde_json::Value> {
    let data_dir = args
        .data
        .as_ref()
        .ok_or_else(|| Error::Config("gcn evaluation needs --data".into()))?;
    let graph = load_graph(data_dir)?;
    let nodes = meta_usize(&ckpt.model, "nodes")?;
    if graph.num_nodes != nodes {
        return Err(Error::Config(format!(
            "dataset has {} nodes but the checkpoint was trained on {nodes}",
            graph.num_nodes
        )));
    }
    let gcn_cfg = GcnConfig {
        dim: meta_usize(&ckpt.model, "dim")?,
        layers: meta_usize(&ckpt.model, "layers")?,
        gain_init: meta_f64(&ckpt.model, "lambda")?,
        ..GcnConfig::default()
    };
    let split_seed = meta_u64(&ckpt.model, "split_seed")?;
    let task = meta_str(&ckpt.model, "task")?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let tape: Tape<T> = Tape::new();
    match task {
        "lp" => {
            let split = lp_split(&graph, split_seed)?;
            let mut model = GcnModel::<T>::link_prediction(graph.num_nodes, curv, &gcn_cfg, &mut rng)?;
            checkpoint::restore(ckpt, &mut model.params_mut())?;
            let ctx = StepCtx::eval(&tape);
            let reps = model.forward(&ctx, &graph.adjacency())?;
            let pos = model.edge_scores(&ctx, &reps, &split.test_pos)?;
            let neg = model.edge_scores(&ctx, &reps, &split.test_neg)?;
            eprintln!(
                "gcn lp eval: {} positive / {} negative test edges",
                pos.len(),
                neg.len()
            );
            Ok(json!({
                "split": "test",
                "task": "lp",
                "positives": pos.len(),
                "negatives": neg.len(),
                "roc_auc": metrics::roc_auc(&pos, &neg),
            }))
        }
        "nc" => {
            let split = nc_split(graph.num_nodes, split_seed);
            let classes = meta_usize(&ckpt.model, "classes")?;
            let features: Vec<Vec<T>> = graph
                .features
                .iter()
                .map(|row| row.iter().map(|&v| T::c(v)).collect())
                .collect();
            let mut model =
                GcnModel::<T>::node_classification(features, classes, curv, &gcn_cfg, &mut rng)?;
            checkpoint::restore(ckpt, &mut model.params_mut())?;
            let ctx = StepCtx::eval(&tape);
            let reps = model.forward(&ctx, &graph.adjacency())?;
            let predicted = model.predict_classes(&ctx, &reps, &split.test)?;
            let gold: Vec<usize> = split.test.iter().map(|&i| graph.labels[i]).collect();
            eprintln!("gcn nc eval: {} test nodes, {classes} classes", split.test.len());
            Ok(json!({
                "split": "test",
                "task": "nc",
                "nodes": split.test.len(),
                "macro_f1": metrics::macro_f1(&predicted, &gold, classes),
            }))
        }
        other => Err(Error::Checkpoint(format!("unknown gcn task {other:?}"))),
    }
}

fn eval_transformer<T: Scalar>(
    ckpt: &Checkpoint<T>,
    curv: Curvature<T>,
) -> Result<serde_json::Value> {
    let vocab = meta_usize(&ckpt.model, "vocab")?;
    let seq_len = meta_usize(&ckpt.model, "seq_len")?;
    let split_seed = meta_u64(&ckpt.model, "split_seed")?;
    let model_cfg = TransformerConfig {
        dim: meta_usize(&ckpt.model, "dim")?,
        heads: meta_usize(&ckpt.model, "heads")?,
        blocks: meta_usize(&ckpt.model, "blocks")?,
        vocab,
        max_len: seq_len,
        ..TransformerConfig::default()
    };
    let (_train, valid) = masked_split(vocab, seq_len, split_seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut model = ToyTransformer::<T>::new(curv, &model_cfg, &mut rng)?;
    checkpoint::restore(ckpt, &mut model.params_mut())?;
    let accuracy = model.accuracy(&valid)?;
    eprintln!("toy-transformer eval: {} held-out sequences", valid.len());
    Ok(json!({
        "split": "valid",
        "sequences": valid.len(),
        "accuracy": accuracy,
    }))
}

// ── checkpoint metadata accessors ───────────────────────────────────────

fn meta_field<'j>(meta: &'j serde_json::Value, key: &str) -> Result<&'j serde_json::Value> {
    meta.get(key)
        .ok_or_else(|| Error::Checkpoint(format!("metadata is missing field {key:?}")))
}

fn meta_str<'j>(meta: &'j serde_json::Value, key: &str) -> Result<&'j str> {
    meta_field(meta, key)?
        .as_str()
        .ok_or_else(|| Error::Checkpoint(format!("metadata field {key:?} is not a string")))
}

fn meta_f64(meta: &serde_json::Value, key: &str) -> Result<f64> {
    meta_field(meta, key)?
        .as_f64()
        .ok_or_else(|| Error::Checkpoint(format!("metadata field {key:?} is not a number")))
}

fn meta_u64(meta: &serde_json::Value, key: &str) -> Result<u64> {
    meta_field(meta, key)?.as_u64().ok_or_else(|| {
        Error::Checkpoint(format!("metadata field {key:?} is not an unsigned integer"))
    })
}

fn meta_usize(meta: &serde_json::Value, key: &str) -> Result<usize> {
    meta_u64(meta, key).map(|v| v as usize)
}

fn meta_opt_f64(meta: &serde_json::Value, key: &str) -> Result<Option<f64>> {
    match meta.get(key) {
        None | Some(serde_json::Value::Null) => Ok(None),
        Some(v) => v.as_f64().map(Some).ok_or_else(|| {
            Error::Checkpoint(format!("metadata field {key:?} is not a number or null"))
        }),
    }
}
