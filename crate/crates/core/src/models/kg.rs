//! Knowledge-graph completion on the hyperboloid.
//!
//! Entities are spatial vectors lifted onto the manifold (time recomputed),
//! each relation is one spatial-map matrix applied in the fx form
//! `x ↦ [√(‖Wx‖² − 1/K); Wx]` (no activation), and a triplet is scored by
//! `s(h, r, t) = −d²_L(f_r(e_h), e_t) + b_h + b_t + δ`.

use std::collections::HashSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::layers::{lift_spatial_t, spatial_map_t, squared_distance_t};
use crate::manifold::{self, Curvature, LorentzPoint, Matrix};
use crate::metrics;
use crate::params::{Constraint, Param, ParamKind, StepCtx};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct KgConfig {
    /// Spatial dimensionality `n`; points live in ℝ^{n+1}.
    pub dim: usize,
    /// Constant score offset δ.
    pub margin: f64,
    /// Cap on entity spatial norms, re-projected after every optimizer step.
    pub max_norm: Option<f64>,
    /// Std of the entity init and of the noise around the near-identity
    /// relation init.
    pub init_std: f64,
}

impl Default for KgConfig {
    fn default() -> Self {
        KgConfig {
            dim: 16,
            margin: 8.0,
            max_norm: Some(1.5),
            init_std: 0.05,
        }
    }
}

/// Aggregated filtered-ranking metrics, serialized as the eval JSON object.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KgMetrics {
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
}

pub struct KgModel<T: Scalar> {
    curv: Curvature<T>,
    num_entities: usize,
    num_relations: usize,
    dim: usize,
    margin: T,
    /// `[E, n]` spatial coordinates, one row per entity.
    entity: Param<T>,
    /// `[E]` per-entity score offsets, used for both head and tail roles.
    bias: Param<T>,
    /// One `[n, n+1]` fx-form matrix per relation.
    rels: Vec<Param<T>>,
}

impl<T: Scalar> KgModel<T> {
    pub fn new(
        num_entities: usize,
        num_relations: usize,
        curv: Curvature<T>,
        cfg: &KgConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if num_entities < 2 || num_relations == 0 || cfg.dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "need ≥ 2 entities, ≥ 1 relation, dim ≥ 1; got {num_entities}/{num_relations}/{}",
                cfg.dim
            )));
        }
        let n = cfg.dim;
        let std = T::c(cfg.init_std);
        let entity_data: Vec<T> = (0..num_entities * n)
            .map(|_| manifold::normal::<T>(rng) * std)
            .collect();
        let mut entity = Param::new(
            "kg.entity",
            vec![num_entities, n],
            entity_data,
            ParamKind::LorentzSpatial,
        );
        if let Some(m) = cfg.max_norm {
            entity = entity.with_constraint(Constraint::MaxRowNorm(m));
            entity.apply_constraint();
        }
        let bias = Param::new(
            "kg.bias",
            vec![num_entities],
            vec![T::zero(); num_entities],
            ParamKind::Euclidean,
        );
        // Relations start as the identity selector [0 | I] plus noise so f_r
        // is near-identity; a raw Gaussian matrix would throw near-origin
        // points far out on the sheet before training begins.
        let rels = (0..num_relations)
            .map(|r| {
                let mut data = vec![T::zero(); n * (n + 1)];
                for i in 0..n {
                    data[i * (n + 1) + 1 + i] = T::one();
                }
                for v in data.iter_mut() {
                    *v = *v + manifold::normal::<T>(rng) * std;
                }
                Param::new(format!("kg.rel{r}.w"), vec![n, n + 1], data, ParamKind::Euclidean)
            })
            .collect();
        Ok(KgModel {
            curv,
            num_entities,
            num_relations,
            dim: n,
            margin: T::c(cfg.margin),
            entity,
            bias,
            rels,
        })
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn curvature(&self) -> Curvature<T> {
        self.curv
    }

    /// Parameters in a fixed order: entity table, biases, relation matrices.
    pub fn params(&self) -> Vec<&Param<T>> {
        let mut out = vec![&self.entity, &self.bias];
        out.extend(self.rels.iter());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = vec![&mut self.entity, &mut self.bias];
        out.extend(self.rels.iter_mut());
        out
    }

    fn check_ids(&self, h: usize, r: usize, t: usize) -> Result<()> {
        for (kind, id, count) in [
            ("entity", h, self.num_entities),
            ("relation", r, self.num_relations),
            ("entity", t, self.num_entities),
        ] {
            if id >= count {
                return Err(Error::UnknownId { kind: match kind {
                    "entity" => "entity",
                    _ => "relation",
                }, id, count });
            }
        }
        Ok(())
    }

    /// Taped plausibility score `−d²_L(f_r(e_h), e_t) + b_h + b_t + δ`.
    pub fn score_t<'t>(
        &self,
        ctx: &StepCtx<'t, T>,
        h: usize,
        r: usize,
        t: usize,
    ) -> Result<Tensor<'t, T>> {
        self.check_ids(h, r, t)?;
        let entity = ctx.param(&self.entity);
        let head = lift_spatial_t(&entity.row(h)?, self.curv)?;
        let tail = lift_spatial_t(&entity.row(t)?, self.curv)?;
        let w = ctx.param(&self.rels[r]);
        let moved = spatial_map_t(&w, &head, self.curv)?;
        let d2 = squared_distance_t(&moved, &tail, self.curv)?;
        let bias = ctx.param(&self.bias);
        let b_h = bias.slice_last(h, h + 1)?;
        let b_t = bias.slice_last(t, t + 1)?;
        d2.neg()
            .add(&b_h)?
            .add(&b_t)?
            .add(&Tensor::scalar(self.margin))
    }

    /// Binary cross-entropy over the batch with `k` uniform negatives per
    /// triplet: `−(1/N) Σ_i [log σ(s_i⁺) + Σ_j log σ(−s̃_ij)]`. For each
    /// negative the corrupted side (head or tail) is chosen uniformly, and
    /// the replacement entity uniformly over the vocabulary minus the true
    /// one. Sampling draws from the context RNG, so a fixed seed freezes the
    /// negatives.
    pub fn loss_t<'t>(
        &self,
        ctx: &StepCtx<'t, T>,
        batch: &[[usize; 3]],
        k: usize,
    ) -> Result<Tensor<'t, T>> {
        if k == 0 {
            return Err(Error::InvalidArgument("need k ≥ 1 negatives".into()));
        }
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty triplet batch".into()));
        }
        let mut total: Option<Tensor<'t, T>> = None;
        let mut accumulate = |t: Tensor<'t, T>| -> Result<()> {
            total = Some(match total.take() {
                Some(acc) => acc.add(&t)?,
                None => t,
            });
            Ok(())
        };
        for &[h, r, t] in batch {
            let pos = self.score_t(ctx, h, r, t)?;
            accumulate(log_sigmoid(&pos))?;
            for _ in 0..k {
                let (nh, nt) = {
                    let mut rng = ctx.rng();
                    if rng.gen_range(0..2u32) == 0 {
                        (corrupt(&mut rng, h, self.num_entities), t)
                    } else {
                        (h, corrupt(&mut rng, t, self.num_entities))
                    }
                };
                let neg = self.score_t(ctx, nh, r, nt)?;
                accumulate(log_sigmoid(&neg.neg()))?;
            }
        }
        let total = total.expect("non-empty batch accumulates");
        total
            .neg()
            .div(&Tensor::scalar(T::from_usize(batch.len()).expect("batch fits scalar")))
    }

    /// Filtered tail ranks (mean-of-tied-block convention), tape-free.
    /// Reciprocal-augmented queries cover head prediction. Candidates other
    /// than the true tail that appear in `filter` are skipped; pass an empty
    /// filter for raw ranks.
    pub fn tail_ranks(
        &self,
        queries: &[[usize; 3]],
        filter: &HashSet<[usize; 3]>,
    ) -> Result<Vec<f64>> {
        let n = self.dim;
        let ent = self.entity.values();
        let bias = self.bias.values();
        let points: Vec<LorentzPoint<T>> = (0..self.num_entities)
            .map(|e| LorentzPoint::from_spatial(&ent[e * n..(e + 1) * n], self.curv))
            .collect();
        let mut ranks = Vec::with_capacity(queries.len());
        for &[h, r, t] in queries {
            self.check_ids(h, r, t)?;
            let w = Matrix::new(n, n + 1, self.rels[r].values().to_vec());
            let moved = LorentzPoint::from_spatial(&w.apply(points[h].coords()), self.curv);
            let score = |e: usize| {
                let d2 = manifold::squared_distance(moved.coords(), points[e].coords(), self.curv);
                (bias[h] + bias[e] + self.margin - d2).to_f64c()
            };
            let true_score = score(t);
            let others = (0..self.num_entities)
                .filter(|&e| e != t && !filter.contains(&[h, r, e]))
                .map(score);
            ranks.push(metrics::rank_with_ties(true_score, others));
        }
        Ok(ranks)
    }

    pub fn rank_metrics(
        &self,
        queries: &[[usize; 3]],
        filter: &HashSet<[usize; 3]>,
    ) -> Result<KgMetrics> {
        if queries.is_empty() {
            return Err(Error::InvalidArgument(
                "cannot rank an empty query set".into(),
            ));
        }
        let ranks = self.tail_ranks(queries, filter)?;
        Ok(KgMetrics {
            mrr: metrics::mean_reciprocal_rank(&ranks),
            hits1: metrics::hits_at(&ranks, 1),
            hits3: metrics::hits_at(&ranks, 3),
            hits10: metrics::hits_at(&ranks, 10),
        })
    }
}

/// `log σ(x)` via the stable sigmoid, floored at 1e−12 so deeply saturated
/// scores stay finite (their gradient contribution flattens to zero).
fn log_sigmoid<'t, T: Scalar>(x: &Tensor<'t, T>) -> Tensor<'t, T> {
    x.sigmoid().clamp_min(T::c(1e-12)).log()
}

/// Uniform draw over `0..count` excluding `exclude`, using one RNG draw.
fn corrupt(rng: &mut ChaCha8Rng, exclude: usize, count: usize) -> usize {
    let raw = rng.gen_range(0..count - 1);
    if raw >= exclude {
        raw + 1
    } else {
        raw
    }
}
