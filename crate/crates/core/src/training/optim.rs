//! Optimizers over named parameters.
//!
//! The default is Euclidean Adam on the raw parameter values. For
//! spatial-parametrized embeddings that is exact gradient descent on the
//! unconstrained chart — the time coordinate is recomputed wherever a point
//! is lifted, so the feasible set is preserved without any retraction. Each
//! step finishes by re-applying the parameters' constraints (max-norm rows,
//! positive gains), which keeps every invariant the models rely on.
//!
//! A Riemannian SGD is available behind [`Method::RiemannianSgd`] for
//! comparison: spatial rows are moved along geodesics via the exponential
//! map of the chart's Riemannian gradient, full-point rows along the
//! projected ambient gradient, and flat values by plain SGD.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::manifold::{exp_map, lorentz_inner, Curvature, LorentzPoint, TangentVector};
use crate::params::{Param, ParamId, ParamKind};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub enum Method<T> {
    Adam,
    RiemannianSgd { curv: Curvature<T> },
}

struct Moments<T> {
    m: Vec<T>,
    v: Vec<T>,
}

pub struct OptimizerState<T> {
    method: Method<T>,
    lr: T,
    betas: (T, T),
    eps: T,
    /// Global gradient-norm bound, applied across all parameters at once.
    max_grad_norm: Option<f64>,
    step: u64,
    slots: HashMap<ParamId, Moments<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn adam(lr: f64, max_grad_norm: Option<f64>) -> Self {
        OptimizerState {
            method: Method::Adam,
            lr: T::c(lr),
            betas: (T::c(0.9), T::c(0.999)),
            eps: T::c(1e-8),
            max_grad_norm,
            step: 0,
            slots: HashMap::new(),
        }
    }

    pub fn riemannian_sgd(lr: f64, max_grad_norm: Option<f64>, curv: Curvature<T>) -> Self {
        OptimizerState {
            method: Method::RiemannianSgd { curv },
            lr: T::c(lr),
            betas: (T::c(0.9), T::c(0.999)),
            eps: T::c(1e-8),
            max_grad_norm,
            step: 0,
            slots: HashMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over the whole parameter set. `grads[i]` is the gradient
    /// for `params[i]`, dense and in value order.
    pub fn step(&mut self, params: &mut [&mut Param<T>], mut grads: Vec<Vec<T>>) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::InvalidArgument(format!(
                "{} gradient buffers for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        for (p, g) in params.iter().zip(&grads) {
            if g.len() != p.numel() {
                return Err(Error::InvalidArgument(format!(
                    "gradient for '{}' has {} elements, parameter has {}",
                    p.name(),
                    g.len(),
                    p.numel()
                )));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    what: "gradient",
                    param: p.name().to_string(),
                });
            }
        }

        if let Some(bound) = self.max_grad_norm {
            let total: f64 = grads
                .iter()
                .flat_map(|g| g.iter())
                .map(|&v| {
                    let f = v.to_f64c();
                    f * f
                })
                .sum();
            let norm = total.sqrt();
            if norm > bound {
                let scale = T::c(bound / norm);
                for g in &mut grads {
                    for v in g {
                        *v *= scale;
                    }
                }
            }
        }

        self.step += 1;
        for (p, g) in params.iter_mut().zip(grads) {
            match self.method {
                Method::Adam => self.adam_update(p, &g)?,
                Method::RiemannianSgd { curv } => self.rsgd_update(p, &g, curv)?,
            }
            p.apply_constraint();
            if !p.is_finite() {
                return Err(Error::NonFinite {
                    what: "parameter",
                    param: p.name().to_string(),
                });
            }
        }
        Ok(())
    }

    fn adam_update(&mut self, p: &mut Param<T>, g: &[T]) -> Result<()> {
        if p.kind() == ParamKind::LorentzFull {
            return Err(Error::Config(format!(
                "'{}' stores full manifold points; update it with the Riemannian method",
                p.name()
            )));
        }
        let (b1, b2) = self.betas;
        let slot = self.slots.entry(p.id()).or_insert_with(|| Moments {
            m: vec![T::zero(); g.len()],
            v: vec![T::zero(); g.len()],
        });
        let c1 = T::one() - b1.powi(self.step as i32);
        let c2 = T::one() - b2.powi(self.step as i32);
        let values = p.values_mut();
        for i in 0..g.len() {
            slot.m[i] = b1 * slot.m[i] + (T::one() - b1) * g[i];
            slot.v[i] = b2 * slot.v[i] + (T::one() - b2) * g[i] * g[i];
            let m_hat = slot.m[i] / c1;
            let v_hat = slot.v[i] / c2;
            values[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }

    fn rsgd_update(&mut self, p: &mut Param<T>, g: &[T], curv: Curvature<T>) -> Result<()> {
        let lr = self.lr;
        match p.kind() {
            ParamKind::Euclidean => {
                for (value, &gi) in p.values_mut().iter_mut().zip(g) {
                    *value -= lr * gi;
                }
            }
            ParamKind::LorentzSpatial => {
                // The chart metric is G = I − s sᵀ/t², so the Riemannian
                // gradient is G⁻¹∇ = ∇ + (−K)(s·∇)s; its pushforward onto the
                // ambient tangent space is ((s·rgrad)/t, rgrad), which rides
                // the exponential map. Only the spatial part is stored back.
                let row = p.row_len().max(1);
                let name = p.name().to_string();
                for (s, gr) in p.values_mut().chunks_mut(row).zip(g.chunks(row)) {
                    let point = LorentzPoint::from_spatial(s, curv);
                    let sg: T = s.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                    let rgrad: Vec<T> = gr
                        .iter()
                        .zip(s.iter())
                        .map(|(&gi, &si)| gi + curv.minus_k() * sg * si)
                        .collect();
                    let srg: T = s.iter().zip(&rgrad).map(|(&a, &b)| a * b).sum();
                    let mut components = Vec::with_capacity(row + 1);
                    components.push(-lr * srg / point.time());
                    components.extend(rgrad.iter().map(|&r| -lr * r));
                    let moved = exp_map(&TangentVector::at(point, components), curv)
                        .map_err(|e| step_failed(&name, e))?;
                    s.copy_from_slice(moved.spatial());
                }
            }
            ParamKind::LorentzFull => {
                // Ambient gradient: flip the time component (Minkowski
                // inverse metric), project onto the tangent space, and ride
                // the geodesic.
                let row = p.row_len().max(1);
                let name = p.name().to_string();
                for (x, gr) in p.values_mut().chunks_mut(row).zip(g.chunks(row)) {
                    let mut h = gr.to_vec();
                    h[0] = -h[0];
                    let inner = lorentz_inner(x, &h);
                    let base = LorentzPoint::new_checked(x.to_vec(), curv)
                        .map_err(|e| step_failed(&name, e))?;
                    let components: Vec<T> = h
                        .iter()
                        .zip(x.iter())
                        .map(|(&hi, &xi)| -lr * (hi - curv.k() * inner * xi))
                        .collect();
                    let moved = exp_map(&TangentVector::at(base, components), curv)
                        .map_err(|e| step_failed(&name, e))?;
                    x.copy_from_slice(moved.coords());
                }
            }
        }
        Ok(())
    }
}

fn step_failed(param: &str, e: Error) -> Error {
    Error::Config(format!("Riemannian step on '{param}' failed: {e}"))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::layers::{lift_spatial_t, squared_distance_t};
    use crate::manifold::{normal, random_point};
    use crate::params::{Constraint, StepCtx};
    use crate::tensor::{Tape, Tensor};

    fn curv() -> Curvature<f64> {
        Curvature::standard()
    }

    fn scalar_param(name: &str, v: f64) -> Param<f64> {
        Param::new(name, vec![1], vec![v], ParamKind::Euclidean)
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut p = Param::new("w", vec![2, 2], vec![0.5, -1.5, 2.0, 0.25], ParamKind::Euclidean);
        let before = p.values().to_vec();
        let mut opt = OptimizerState::adam(0.1, Some(0.5));
        for _ in 0..3 {
            opt.step(&mut [&mut p], vec![vec![0.0; 4]]).unwrap();
        }
        assert_eq!(p.values(), &before[..], "zero gradient must be a no-op");
    }

    #[test]
    fn first_adam_step_matches_the_bias_correction_oracle() {
        let mut p = scalar_param("w", 1.0);
        let mut opt = OptimizerState::adam(0.1, None);
        opt.step(&mut [&mut p], vec![vec![1.0]]).unwrap();
        // Bias correction makes m̂ = v̂ = 1 on step one, so the update is
        // exactly −lr/(1 + ε).
        let expected = 1.0 - 0.1 / (1.0 + 1e-8);
        assert!(
            (p.values()[0] - expected).abs() < 1e-16,
            "first-step update should be −lr/(1+ε), got {}",
            p.values()[0]
        );
        assert!((p.values()[0] - 0.9).abs() < 1e-8, "update must be ≈ −0.1");
    }

    #[test]
    fn max_norm_projection_is_exact() {
        let mut p = Param::new("emb", vec![1, 2], vec![3.0, 0.0], ParamKind::LorentzSpatial)
            .with_constraint(Constraint::MaxRowNorm(1.5));
        let mut opt = OptimizerState::adam(0.1, None);
        opt.step(&mut [&mut p], vec![vec![0.0, 0.0]]).unwrap();
        assert_eq!(
            p.values(),
            &[1.5, 0.0],
            "a norm-3 row must land exactly on the norm-1.5 sphere"
        );
    }

    #[test]
    fn global_clipping_bounds_the_gradient_norm() {
        // Plain SGD with lr 1 writes the (clipped) gradient straight into the
        // values, which makes the effective norm observable.
        let mut a = scalar_param("a", 0.0);
        let mut b = scalar_param("b", 0.0);
        let mut opt = OptimizerState::riemannian_sgd(1.0, Some(0.5), curv());
        opt.step(&mut [&mut a, &mut b], vec![vec![3.0], vec![4.0]])
            .unwrap();
        let applied = (a.values()[0].powi(2) + b.values()[0].powi(2)).sqrt();
        assert!(
            (applied - 0.5).abs() < 1e-12,
            "clipped update norm should equal the bound, got {applied}"
        );
        assert!((a.values()[0] + 0.3).abs() < 1e-12, "direction must be preserved");
        assert!((b.values()[0] + 0.4).abs() < 1e-12, "direction must be preserved");

        // Under the bound, gradients pass through untouched.
        let mut c = scalar_param("c", 0.0);
        let mut opt2 = OptimizerState::riemannian_sgd(1.0, Some(0.5), curv());
        opt2.step(&mut [&mut c], vec![vec![0.25]]).unwrap();
        assert_eq!(c.values()[0], -0.25, "small gradients must not be rescaled");
    }

    #[test]
    fn non_finite_gradients_name_the_parameter() {
        let mut p = scalar_param("model.bias", 0.0);
        let mut opt = OptimizerState::adam(0.1, Some(0.5));
        let err = opt
            .step(&mut [&mut p], vec![vec![f64::NAN]])
            .unwrap_err();
        match err {
            Error::NonFinite { what, param } => {
                assert_eq!(what, "gradient");
                assert_eq!(param, "model.bias");
            }
            other => panic!("expected a non-finite diagnostic, got {other}"),
        }
        assert_eq!(p.values(), &[0.0], "a rejected step must not move parameters");
    }

    #[test]
    fn mismatched_gradient_buffers_are_rejected() {
        let mut p = scalar_param("w", 0.0);
        let mut opt = OptimizerState::adam(0.1, None);
        assert!(opt.step(&mut [&mut p], vec![]).is_err(), "missing buffer");
        assert!(
            opt.step(&mut [&mut p], vec![vec![1.0, 2.0]]).is_err(),
            "wrong buffer length"
        );
    }

    #[test]
    fn riemannian_step_from_the_origin_follows_the_geodesic() {
        // At the origin the chart gradient equals the raw gradient, so one
        // step lands at exp_origin(−lr·(0, g)): spatial −sinh(lr‖g‖)·g/‖g‖.
        let mut p = Param::new("emb", vec![1, 2], vec![0.0, 0.0], ParamKind::LorentzSpatial);
        let mut opt = OptimizerState::riemannian_sgd(0.01, None, curv());
        opt.step(&mut [&mut p], vec![vec![3.0, 4.0]]).unwrap();
        let s = 0.05_f64.sinh();
        assert!((p.values()[0] + 0.6 * s).abs() < 1e-15, "got {:?}", p.values());
        assert!((p.values()[1] + 0.8 * s).abs() < 1e-15, "got {:?}", p.values());
    }

    #[test]
    fn riemannian_step_descends_a_taped_distance_objective() {
        let mut r = ChaCha8Rng::seed_from_u64(17);
        let target = random_point::<f64>(4, curv(), 1.0, &mut r);
        let start: Vec<f64> = (0..4).map(|_| normal::<f64>(&mut r)).collect();
        let mut p = Param::new("emb", vec![1, 4], start, ParamKind::LorentzSpatial);

        let objective = |p: &Param<f64>| -> (f64, Vec<f64>) {
            let tape = Tape::new();
            let ctx = StepCtx::train(&tape, 0);
            let leaf = ctx.param(p);
            let lifted = lift_spatial_t(&leaf.row(0).unwrap(), curv()).unwrap();
            let anchor = Tensor::constant(&[5], target.coords().to_vec());
            let d2 = squared_distance_t(&lifted, &anchor, curv()).unwrap();
            let grads = tape.backward(&d2).unwrap();
            (d2.item(), grads.wrt_or_zeros(&leaf))
        };

        let mut opt = OptimizerState::riemannian_sgd(0.05, None, curv());
        let (first, _) = objective(&p);
        let mut last = first;
        for _ in 0..40 {
            let (value, grad) = objective(&p);
            opt.step(&mut [&mut p], vec![grad]).unwrap();
            let (after, _) = objective(&p);
            assert!(
                after < value + 1e-12,
                "a geodesic gradient step must not increase the objective ({value} → {after})"
            );
            last = after;
        }
        assert!(
            last < 0.1 * first,
            "forty steps should close most of the gap ({first} → {last})"
        );
    }

    #[test]
    fn full_point_rows_ride_geodesics_and_stay_on_manifold() {
        let mut r = ChaCha8Rng::seed_from_u64(18);
        let rows: Vec<f64> = (0..2)
            .flat_map(|_| random_point::<f64>(3, curv(), 1.0, &mut r).coords().to_vec())
            .collect();
        let mut p = Param::new("points", vec![2, 4], rows, ParamKind::LorentzFull);

        let mut opt = OptimizerState::riemannian_sgd(0.05, None, curv());
        for _ in 0..5 {
            let g: Vec<f64> = (0..8).map(|_| normal::<f64>(&mut r)).collect();
            opt.step(&mut [&mut p], vec![g]).unwrap();
            for row in p.values().chunks(4) {
                let residual = (lorentz_inner(row, row) + 1.0).abs();
                assert!(residual < 1e-9, "row left the manifold by {residual:.3e}");
                assert!(row[0] > 0.0, "row left the upper sheet");
            }
        }

        let mut adam = OptimizerState::adam(0.1, None);
        assert!(
            adam.step(&mut [&mut p], vec![vec![0.0; 8]]).is_err(),
            "Adam must refuse full-point parameters"
        );
    }
}
