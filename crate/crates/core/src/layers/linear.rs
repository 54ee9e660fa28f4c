//! Parametric manifold layers.
//!
//! Both layers here follow the same recipe: a learned gate decides the output
//! time coordinate (and with it the spatial norm), a learned linear map
//! decides the spatial direction, and the time/norm coupling keeps the result
//! exactly on the hyperboloid for *any* parameter values and *any* input
//! vector — inputs do not have to be manifold points, which is what lets
//! attention feed concatenated per-head outputs straight into one of these.

use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::manifold::{normal, Curvature};
use crate::params::{Constraint, Param, ParamKind, StepCtx};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::transform::lift_spatial_t;

/// Pointwise activation applied to the spatial-branch input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Identity,
    Relu,
}

impl Activation {
    pub fn apply<'t, T: Scalar>(self, x: &Tensor<'t, T>) -> Tensor<'t, T> {
        match self {
            Activation::Identity => x.clone(),
            Activation::Relu => x.clamp_min(T::zero()),
        }
    }
}

/// Shared layer options. `gain_init` seeds the sigmoid gain λ (kept ≥ 1e-3 by
/// constraint); `time_floor_scale` sets ε = scale·√(−1/K) and must exceed 1
/// so the output time stays above the origin's.
#[derive(Debug, Clone, Copy)]
pub struct LinearCfg {
    pub dropout: f64,
    pub act: Activation,
    pub gain_init: f64,
    pub time_floor_scale: f64,
    pub init_std: Option<f64>,
}

impl Default for LinearCfg {
    fn default() -> Self {
        LinearCfg {
            dropout: 0.0,
            act: Activation::Identity,
            gain_init: 2.5,
            time_floor_scale: 1.1,
            init_std: None,
        }
    }
}

fn init_matrix<T: Scalar>(rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) -> Vec<T> {
    (0..rows * cols)
        .map(|_| normal::<T>(rng) * T::c(std))
        .collect()
}

/// `x ↦ [λσ(vᵀx + b) + ε ; √(y₀² + 1/K)/‖u‖ · u]` with `u = W·h(drop(x))`.
///
/// The time coordinate is gated through a sigmoid and floored at
/// ε > √(−1/K), the spatial part is `u` rescaled to the norm the time
/// dictates, so `−y₀² + ‖y_s‖² = 1/K` holds by construction.
#[derive(Debug)]
pub struct LorentzLinear<T> {
    pub w: Param<T>,
    pub v: Param<T>,
    pub bias: Param<T>,
    pub gain: Param<T>,
    curv: Curvature<T>,
    dropout: f64,
    act: Activation,
    time_floor: T,
    in_len: usize,
    out_dim: usize,
}

impl<T: Scalar> LorentzLinear<T> {
    /// `in_len` is the raw input vector length (n+1 for a manifold point,
    /// anything for concatenated inputs); `out_dim` is the output *spatial*
    /// dimension, so the output has `out_dim + 1` coordinates.
    pub fn new(
        prefix: &str,
        in_len: usize,
        out_dim: usize,
        curv: Curvature<T>,
        cfg: LinearCfg,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(in_len >= 1 && out_dim >= 1, "degenerate layer dimensions");
        assert!(
            cfg.time_floor_scale > 1.0,
            "time floor must exceed the origin's time coordinate"
        );
        let std = cfg.init_std.unwrap_or(1.0 / (in_len as f64).sqrt());
        LorentzLinear {
            w: Param::new(
                format!("{prefix}.w"),
                vec![out_dim, in_len],
                init_matrix(out_dim, in_len, std, rng),
                ParamKind::Euclidean,
            ),
            v: Param::new(
                format!("{prefix}.v"),
                vec![in_len],
                init_matrix(1, in_len, std, rng),
                ParamKind::Euclidean,
            ),
            bias: Param::new(format!("{prefix}.bias"), vec![1], vec![T::zero()], ParamKind::Euclidean),
            gain: Param::new(
                format!("{prefix}.gain"),
                vec![1],
                vec![T::c(cfg.gain_init)],
                ParamKind::Euclidean,
            )
            .with_constraint(Constraint::MinValue(1e-3)),
            curv,
            dropout: cfg.dropout,
            act: cfg.act,
            time_floor: T::c(cfg.time_floor_scale) * curv.radius(),
            in_len,
            out_dim,
        }
    }

    pub fn in_len(&self) -> usize {
        self.in_len
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        vec![&self.w, &self.v, &self.bias, &self.gain]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.w, &mut self.v, &mut self.bias, &mut self.gain]
    }

    pub fn forward<'t>(&self, ctx: &StepCtx<'t, T>, x: &Tensor<'t, T>) -> Result<Tensor<'t, T>> {
        debug_assert_eq!(x.len(), self.in_len, "input length for {}", self.w.name());
        let w = ctx.param(&self.w);
        let v = ctx.param(&self.v);
        let bias = ctx.param(&self.bias);
        let gain = ctx.param(&self.gain);

        let gate = v.mul(x)?.sum().add(&bias)?.sigmoid();
        let time = gain.mul(&gate)?.add(&Tensor::scalar(self.time_floor))?;

        let u = w.matmul(&self.act.apply(&ctx.dropout(x, self.dropout)?))?;
        let target_norm = time
            .square()
            .add(&Tensor::scalar(self.curv.inv_k()))?
            .sqrt();
        // The norm guard only matters when activation/dropout zero the whole
        // spatial branch; the output then degrades continuously to the origin
        // instead of dividing 0/0. Whenever ‖u‖ > 0 the lifted time equals
        // the gated value exactly.
        let safe_norm = u.norm2().clamp_min(T::c(1e-12));
        let spatial = u.mul(&target_norm.div(&safe_norm)?)?;
        super::transform::lift_spatial_t(&spatial, self.curv)
    }
}

/// Gated residual update with the same norm/time coupling:
/// `spatial = λσ(vᵀo)/‖W·h(drop(o)) + skip‖ · (W·h(drop(o)) + skip)`,
/// then the time coordinate is lifted from the spatial norm. The spatial norm
/// equals λσ(vᵀo) exactly, so the gain alone bounds how far an update moves.
///
/// The `skip` argument is the spatial part of whatever the block is supposed
/// to preserve — the previous layer's point, or a position embedding.
#[derive(Debug)]
pub struct LorentzResidual<T> {
    pub w: Param<T>,
    pub v: Param<T>,
    pub gain: Param<T>,
    curv: Curvature<T>,
    dropout: f64,
    act: Activation,
    in_len: usize,
    out_dim: usize,
}

impl<T: Scalar> LorentzResidual<T> {
    pub fn new(
        prefix: &str,
        in_len: usize,
        out_dim: usize,
        curv: Curvature<T>,
        cfg: LinearCfg,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(in_len >= 1 && out_dim >= 1, "degenerate layer dimensions");
        let std = cfg.init_std.unwrap_or(1.0 / (in_len as f64).sqrt());
        LorentzResidual {
            w: Param::new(
                format!("{prefix}.w"),
                vec![out_dim, in_len],
                init_matrix(out_dim, in_len, std, rng),
                ParamKind::Euclidean,
            ),
            v: Param::new(
                format!("{prefix}.v"),
                vec![in_len],
                init_matrix(1, in_len, std, rng),
                ParamKind::Euclidean,
            ),
            gain: Param::new(
                format!("{prefix}.gain"),
                vec![1],
                vec![T::c(cfg.gain_init)],
                ParamKind::Euclidean,
            )
            .with_constraint(Constraint::MinValue(1e-3)),
            curv,
            dropout: cfg.dropout,
            act: cfg.act,
            in_len,
            out_dim,
        }
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        vec![&self.w, &self.v, &self.gain]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.w, &mut self.v, &mut self.gain]
    }

    /// `o` is the transformed branch (length `in_len`), `skip` the spatial
    /// vector to fold back in (length `out_dim`).
    pub fn forward<'t>(
        &self,
        ctx: &StepCtx<'t, T>,
        o: &Tensor<'t, T>,
        skip: &Tensor<'t, T>,
    ) -> Result<Tensor<'t, T>> {
        debug_assert_eq!(o.len(), self.in_len, "input length for {}", self.w.name());
        debug_assert_eq!(skip.len(), self.out_dim, "skip length for {}", self.w.name());
        let w = ctx.param(&self.w);
        let v = ctx.param(&self.v);
        let gain = ctx.param(&self.gain);

        let target_norm = gain.mul(&v.mul(o)?.sum().sigmoid())?;
        let mixed = w
            .matmul(&self.act.apply(&ctx.dropout(o, self.dropout)?))?
            .add(skip)?;
        let spatial = mixed.mul(&target_norm.div(&mixed.norm2())?)?;
        lift_spatial_t(&spatial, self.curv)
    }
}

/// Position encoding: the residual update with the position point riding the
/// bias slot. One `layer` (and so one transform matrix) is shared across all
/// positions of an embedding layer; `x` is the word point, `p` the position
/// point, and `p`'s spatial part enters where the residual skip would.
pub fn position_encode<'t, T: Scalar>(
    layer: &LorentzResidual<T>,
    ctx: &StepCtx<'t, T>,
    x: &Tensor<'t, T>,
    p: &Tensor<'t, T>,
) -> Result<Tensor<'t, T>> {
    layer.forward(ctx, x, &p.slice_last(1, p.len())?)
}
