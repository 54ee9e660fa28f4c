//! Distance-based attention with centroid aggregation.
//!
//! Scores are negated squared Lorentzian distances between query and key
//! points, scaled by 1/√(spatial dim) and softmaxed; the output is the
//! weighted centroid of the value points, which lands back on the manifold
//! without any projection step.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::manifold::Curvature;
use crate::params::{Param, StepCtx};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::linear::{Activation, LinearCfg, LorentzLinear, LorentzResidual};
use super::transform::squared_distance_t;

/// Taped weighted centroid: `μ = s / (√(−K)·√(−⟨s,s⟩_L))`, `s = Σ νⱼxⱼ`.
/// Weights must be positive (softmax output qualifies); the inner product of
/// `s` is then strictly negative and the normalization well-defined.
pub fn centroid_t<'t, T: Scalar>(
    points: &[Tensor<'t, T>],
    weights: &Tensor<'t, T>,
    curv: Curvature<T>,
) -> Result<Tensor<'t, T>> {
    if points.is_empty() || points.len() != weights.len() {
        return Err(Error::InvalidArgument(format!(
            "centroid needs matching nonempty points/weights, got {}/{}",
            points.len(),
            weights.len()
        )));
    }
    let mut s = points[0].mul(&weights.slice_last(0, 1)?)?;
    for (j, p) in points.iter().enumerate().skip(1) {
        s = s.add(&p.mul(&weights.slice_last(j, j + 1)?)?)?;
    }
    let time = s.slice_last(0, 1)?;
    let spatial = s.slice_last(1, s.len())?;
    // −⟨s,s⟩_L = t² − ‖spatial‖², clamped against rounding for single points.
    let minus_ss = time.square().sub(&spatial.square().sum())?.clamp_min(T::c(1e-12));
    let denom = minus_ss.sqrt().mul(&Tensor::scalar(curv.sqrt_minus_k()))?;
    s.div(&denom)
}

/// Single-head attention over sequences of manifold points. Returns one
/// output point per query.
pub fn attention<'t, T: Scalar>(
    queries: &[Tensor<'t, T>],
    keys: &[Tensor<'t, T>],
    values: &[Tensor<'t, T>],
    curv: Curvature<T>,
) -> Result<Vec<Tensor<'t, T>>> {
    if keys.len() != values.len() || keys.is_empty() || queries.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "attention needs nonempty queries and matching keys/values, got {}/{}/{}",
            queries.len(),
            keys.len(),
            values.len()
        )));
    }
    let spatial_dim = queries[0].len() - 1;
    let scale = Tensor::scalar(-T::one() / T::c(spatial_dim as f64).sqrt());
    let mut outputs = Vec::with_capacity(queries.len());
    for q in queries {
        let mut scores = Vec::with_capacity(keys.len());
        for k in keys {
            scores.push(squared_distance_t(q, k, curv)?.mul(&scale)?);
        }
        let score_refs: Vec<&Tensor<'t, T>> = scores.iter().collect();
        let weights = Tensor::concat(&score_refs)?.softmax()?;
        outputs.push(centroid_t(values, &weights, curv)?);
    }
    Ok(outputs)
}

/// Multi-head attention block. Each head projects to a smaller manifold
/// (spatial dim `model_dim / heads`), attends there, and the per-head output
/// points are concatenated coordinate-wise — not a manifold point, which is
/// fine because the output projection accepts arbitrary vectors and its
/// residual path folds the block input back in.
#[derive(Debug)]
pub struct MultiHeadAttention<T> {
    q_proj: Vec<LorentzLinear<T>>,
    k_proj: Vec<LorentzLinear<T>>,
    v_proj: Vec<LorentzLinear<T>>,
    out: LorentzResidual<T>,
    curv: Curvature<T>,
    model_dim: usize,
}

impl<T: Scalar> MultiHeadAttention<T> {
    pub fn new(
        prefix: &str,
        model_dim: usize,
        heads: usize,
        curv: Curvature<T>,
        cfg: LinearCfg,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if heads == 0 || model_dim % heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "model spatial dim {model_dim} is not divisible into {heads} heads"
            )));
        }
        let head_dim = model_dim / heads;
        let proj_cfg = LinearCfg {
            act: Activation::Identity,
            ..cfg
        };
        let mut mk = |role: &str| -> Vec<LorentzLinear<T>> {
            (0..heads)
                .map(|h| {
                    LorentzLinear::new(
                        &format!("{prefix}.{role}{h}"),
                        model_dim + 1,
                        head_dim,
                        curv,
                        proj_cfg,
                        rng,
                    )
                })
                .collect()
        };
        let q_proj = mk("q");
        let k_proj = mk("k");
        let v_proj = mk("v");
        let out = LorentzResidual::new(
            &format!("{prefix}.out"),
            heads * (head_dim + 1),
            model_dim,
            curv,
            LinearCfg {
                act: Activation::Identity,
                ..cfg
            },
            rng,
        );
        Ok(MultiHeadAttention {
            q_proj,
            k_proj,
            v_proj,
            out,
            curv,
            model_dim,
        })
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut ps = Vec::new();
        for layer in self.q_proj.iter().chain(&self.k_proj).chain(&self.v_proj) {
            ps.extend(layer.params());
        }
        ps.extend(self.out.params());
        ps
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut ps = Vec::new();
        for layer in self
            .q_proj
            .iter_mut()
            .chain(self.k_proj.iter_mut())
            .chain(self.v_proj.iter_mut())
        {
            ps.extend(layer.params_mut());
        }
        ps.extend(self.out.params_mut());
        ps
    }

    /// `xs` is a sequence of `model_dim + 1`-coordinate points; the output is
    /// a same-length sequence of points, attended and residually updated.
    pub fn forward<'t>(
        &self,
        ctx: &StepCtx<'t, T>,
        xs: &[Tensor<'t, T>],
    ) -> Result<Vec<Tensor<'t, T>>> {
        let heads = self.q_proj.len();
        let mut per_head: Vec<Vec<Tensor<'t, T>>> = Vec::with_capacity(heads);
        for h in 0..heads {
            let qs: Vec<_> = xs
                .iter()
                .map(|x| self.q_proj[h].forward(ctx, x))
                .collect::<Result<_>>()?;
            let ks: Vec<_> = xs
                .iter()
                .map(|x| self.k_proj[h].forward(ctx, x))
                .collect::<Result<_>>()?;
            let vs: Vec<_> = xs
                .iter()
                .map(|x| self.v_proj[h].forward(ctx, x))
                .collect::<Result<_>>()?;
            per_head.push(attention(&qs, &ks, &vs, self.curv)?);
        }
        let mut outputs = Vec::with_capacity(xs.len());
        for (i, x) in xs.iter().enumerate() {
            let head_points: Vec<&Tensor<'t, T>> = per_head.iter().map(|hp| &hp[i]).collect();
            let concat = Tensor::concat(&head_points)?;
            let skip = x.slice_last(1, self.model_dim + 1)?;
            outputs.push(self.out.forward(ctx, &concat, &skip)?);
        }
        Ok(outputs)
    }
}
