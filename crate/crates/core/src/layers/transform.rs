//! Manifold-preserving linear maps and their tensor-level counterparts.
//!
//! The slice/matrix functions are the plain reference route; the `_t`
//! functions build the same values on a tape so gradients flow. Tests pin the
//! two routes against each other.

use crate::error::{Error, Result};
use crate::manifold::{lorentz_inner, Curvature, Matrix};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

// ── reference (slice) route ─────────────────────────────────────────────────

/// Apply the first-row rescaling that makes an arbitrary matrix
/// `M = [vᵀ; W]` map `x` onto the manifold:
/// `F(M) = [√(‖Wx‖² − 1/K)/(vᵀx) · vᵀ; W]`.
///
/// Fails when `vᵀx` is (numerically) zero — the rescaling is undefined there.
pub fn rescale_for_point<T: Scalar>(
    m: &Matrix<T>,
    x: &[T],
    curv: Curvature<T>,
) -> Result<Matrix<T>> {
    assert_eq!(m.cols(), x.len(), "matrix/point dimensions");
    let mut vx = T::zero();
    for j in 0..m.cols() {
        vx += m.get(0, j) * x[j];
    }
    if vx.abs() < T::c(1e-12) {
        return Err(Error::domain(
            "rescale_for_point",
            format!("vᵀx = {vx} too close to zero to rescale"),
        ));
    }
    let mut wx_sq = T::zero();
    for i in 1..m.rows() {
        let mut acc = T::zero();
        for j in 0..m.cols() {
            acc += m.get(i, j) * x[j];
        }
        wx_sq += acc * acc;
    }
    let scale = (wx_sq - curv.inv_k()).sqrt() / vx;
    let mut out = m.clone();
    for j in 0..m.cols() {
        out.set(0, j, scale * m.get(0, j));
    }
    Ok(out)
}

/// The point the rescaled map sends `x` to, computed directly from the
/// spatial block: `[√(‖Wx‖² − 1/K); Wx]`. Total — no rescaling, no `vᵀx`.
pub fn spatial_map_point<T: Scalar>(w: &Matrix<T>, x: &[T], curv: Curvature<T>) -> Vec<T> {
    let u = w.apply(x);
    let mut sq = T::zero();
    for &ui in &u {
        sq += ui * ui;
    }
    let mut out = Vec::with_capacity(u.len() + 1);
    out.push((sq - curv.inv_k()).sqrt());
    out.extend(u);
    out
}

/// Closed-form matrix for "rotate in tangent space": the map
/// `x ↦ exp₀(Ŵ·log₀(x))` (Ŵ acting on spatial tangent coordinates) written
/// as a single matrix at `x`,
/// `[[cosh(α)/(√(−K)·x_t), 0ᵀ], [0, sinh(α)/(√(−K)‖Wx_s‖)·W]]`
/// with `α = √(−K)·arcosh(√(−K)x_t)/√(−K·x_t²−1)·‖Wx_s‖`.
///
/// Undefined when `Wx_s` vanishes (the spatial block becomes 0/0), which
/// happens exactly at the origin or for singular `W` aligned against `x_s`.
pub fn tangent_rotation_matrix<T: Scalar>(
    w: &Matrix<T>,
    x: &[T],
    curv: Curvature<T>,
) -> Result<Matrix<T>> {
    let n = w.rows();
    assert_eq!(w.cols(), n, "spatial block must be square");
    assert_eq!(x.len(), n + 1, "point dimension");
    let sqrt_mk = curv.sqrt_minus_k();
    let beta_log = sqrt_mk * x[0];
    let wx = w.apply(&x[1..]);
    let mut wx_norm = T::zero();
    for &v in &wx {
        wx_norm += v * v;
    }
    let wx_norm = wx_norm.sqrt();
    if wx_norm < T::c(1e-12) || beta_log <= T::one() + T::c(1e-12) {
        return Err(Error::domain(
            "tangent_rotation_matrix",
            format!("degenerate at ‖Wx_s‖ = {wx_norm}, √(−K)x_t = {beta_log}"),
        ));
    }
    let alpha = sqrt_mk * beta_log.acosh() / (beta_log * beta_log - T::one()).sqrt() * wx_norm;
    let dim = n + 1;
    let mut h = Matrix::new(dim, dim, vec![T::zero(); dim * dim]);
    h.set(0, 0, alpha.cosh() / (sqrt_mk * x[0]));
    let spatial_scale = alpha.sinh() / (sqrt_mk * wx_norm);
    for i in 0..n {
        for j in 0..n {
            h.set(i + 1, j + 1, spatial_scale * w.get(i, j));
        }
    }
    Ok(h)
}

/// Reference centroid: `μ = Σ νⱼxⱼ / (√(−K)·√(−⟨s,s⟩_L))` where `s` is the
/// weighted sum. Positive weights keep `s` timelike, so the square root is
/// safe; the result does not depend on the overall scale of the weights.
pub fn centroid_point<T: Scalar>(
    points: &[&[T]],
    weights: &[T],
    curv: Curvature<T>,
) -> Result<Vec<T>> {
    if points.is_empty() || points.len() != weights.len() {
        return Err(Error::InvalidArgument(format!(
            "centroid needs matching nonempty points/weights, got {}/{}",
            points.len(),
            weights.len()
        )));
    }
    let dim = points[0].len();
    let mut s = vec![T::zero(); dim];
    for (p, &w) in points.iter().zip(weights) {
        for (si, &pi) in s.iter_mut().zip(*p) {
            *si += w * pi;
        }
    }
    let ss = lorentz_inner(&s, &s);
    if ss >= T::zero() {
        return Err(Error::domain(
            "centroid_point",
            format!("weighted sum is not timelike (⟨s,s⟩ = {ss}); weights must be positive"),
        ));
    }
    let denom = curv.sqrt_minus_k() * (-ss).sqrt();
    for si in &mut s {
        *si /= denom;
    }
    Ok(s)
}

// ── tensor route ────────────────────────────────────────────────────────────

/// Taped ⟨x,y⟩_L for rank-1 coordinate vectors: `x·y − 2·x₀y₀`.
pub fn lorentz_inner_t<'t, T: Scalar>(
    x: &Tensor<'t, T>,
    y: &Tensor<'t, T>,
) -> Result<Tensor<'t, T>> {
    let dot = x.mul(y)?.sum();
    let t0 = x.slice_last(0, 1)?.mul(&y.slice_last(0, 1)?)?;
    dot.sub(&t0.mul(&Tensor::scalar(T::c(2.0)))?)
}

/// Taped squared Lorentzian distance `2/K − 2⟨x,y⟩_L` (no clamp: training
/// only evaluates it on distinct points, and a clamp would flatten the
/// gradient exactly where attention needs it).
pub fn squared_distance_t<'t, T: Scalar>(
    x: &Tensor<'t, T>,
    y: &Tensor<'t, T>,
    curv: Curvature<T>,
) -> Result<Tensor<'t, T>> {
    let inner = lorentz_inner_t(x, y)?;
    inner
        .mul(&Tensor::scalar(T::c(-2.0)))?
        .add(&Tensor::scalar(T::c(2.0) * curv.inv_k()))
}

/// Lift a spatial vector onto the sheet on-tape: `[√(‖u‖² − 1/K); u]`.
pub fn lift_spatial_t<'t, T: Scalar>(
    u: &Tensor<'t, T>,
    curv: Curvature<T>,
) -> Result<Tensor<'t, T>> {
    let time = u
        .square()
        .sum()
        .add(&Tensor::scalar(-curv.inv_k()))?
        .sqrt();
    Tensor::concat(&[&time, u])
}

/// Taped version of [`spatial_map_point`]: `w` is `[m, d]`, `x` is `[d]`.
pub fn spatial_map_t<'t, T: Scalar>(
    w: &Tensor<'t, T>,
    x: &Tensor<'t, T>,
    curv: Curvature<T>,
) -> Result<Tensor<'t, T>> {
    lift_spatial_t(&w.matmul(x)?, curv)
}
