//! The Lorentz (hyperboloid) model of hyperbolic space.
//!
//! Points live on the upper sheet of `⟨x,x⟩_L = 1/K` for curvature `K < 0`,
//! with the time coordinate stored first: `x = (x_t, x_s)` and
//! `⟨x,y⟩_L = −x_t·y_t + x_s·y_s`. Everything here is plain (non-taped)
//! arithmetic on slices and small matrices; the differentiable layer
//! counterparts live in [`crate::layers`] and are tested against these
//! functions as an independent route.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Negative curvature of the ambient space. `K = −1` unless stated otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Curvature<T>(T);

impl<T: Scalar> Curvature<T> {
    pub fn new(k: T) -> Result<Self> {
        if k < T::zero() && k.is_finite() {
            Ok(Curvature(k))
        } else {
            Err(Error::InvalidArgument(format!(
                "curvature must be negative and finite, got {k}"
            )))
        }
    }

    /// The standard space, K = −1.
    pub fn standard() -> Self {
        Curvature(-T::one())
    }

    #[inline]
    pub fn k(self) -> T {
        self.0
    }

    /// −K > 0.
    #[inline]
    pub fn minus_k(self) -> T {
        -self.0
    }

    #[inline]
    pub fn sqrt_minus_k(self) -> T {
        (-self.0).sqrt()
    }

    /// 1/K < 0 — the value of ⟨x,x⟩_L for on-manifold points.
    #[inline]
    pub fn inv_k(self) -> T {
        T::one() / self.0
    }

    /// √(−1/K) — the time coordinate of the origin.
    #[inline]
    pub fn radius(self) -> T {
        (-T::one() / self.0).sqrt()
    }
}

impl<T: Scalar> Default for Curvature<T> {
    fn default() -> Self {
        Curvature::standard()
    }
}

/// ⟨x,y⟩_L = −x₀y₀ + Σᵢ xᵢyᵢ.
pub fn lorentz_inner<T: Scalar>(x: &[T], y: &[T]) -> T {
    debug_assert_eq!(x.len(), y.len(), "inner product needs equal dimensions");
    let mut acc = -(x[0] * y[0]);
    for (a, b) in x[1..].iter().zip(&y[1..]) {
        acc += *a * *b;
    }
    acc
}

/// Squared Lorentzian distance, d²_L(x,y) = 2/K − 2⟨x,y⟩_L, clamped at 0
/// against rounding for near-identical points.
pub fn squared_distance<T: Scalar>(x: &[T], y: &[T], curv: Curvature<T>) -> T {
    let two = T::c(2.0);
    let d2 = two * curv.inv_k() - two * lorentz_inner(x, y);
    d2.max(T::zero())
}

/// Geodesic distance, arcosh(K⟨x,y⟩_L)/√(−K).
pub fn distance<T: Scalar>(x: &[T], y: &[T], curv: Curvature<T>) -> T {
    let beta = (curv.k() * lorentz_inner(x, y)).max(T::one());
    beta.acosh() / curv.sqrt_minus_k()
}

/// A point on the upper hyperboloid sheet. Construction is checked, so a
/// value of this type is always on-manifold to within the scalar's tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct LorentzPoint<T> {
    coords: Vec<T>,
}

impl<T: Scalar> LorentzPoint<T> {
    /// Validate ⟨x,x⟩_L = 1/K and x_t > 0 before accepting the coordinates.
    pub fn new_checked(coords: Vec<T>, curv: Curvature<T>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::InvalidArgument(
                "a Lorentz point needs a time coordinate and ≥ 1 spatial".into(),
            ));
        }
        let inner = lorentz_inner(&coords, &coords);
        let drift = (inner - curv.inv_k()).abs();
        let tol = T::on_manifold_tol() * T::one().max(curv.inv_k().abs());
        if drift > tol {
            return Err(Error::domain(
                "lorentz_point",
                format!("⟨x,x⟩_L = {inner}, expected {} (drift {drift})", curv.inv_k()),
            ));
        }
        if coords[0] <= T::zero() {
            return Err(Error::domain(
                "lorentz_point",
                format!("time coordinate {} not positive (lower sheet?)", coords[0]),
            ));
        }
        Ok(LorentzPoint { coords })
    }

    /// Lift a spatial vector onto the sheet: x_t = √(‖x_s‖² − 1/K).
    /// Total by construction — every spatial vector has exactly one lift.
    pub fn from_spatial(spatial: &[T], curv: Curvature<T>) -> Self {
        let mut coords = Vec::with_capacity(spatial.len() + 1);
        let mut sq = T::zero();
        for &s in spatial {
            sq += s * s;
        }
        coords.push((sq - curv.inv_k()).sqrt());
        coords.extend_from_slice(spatial);
        LorentzPoint { coords }
    }

    /// The point (√(−1/K), 0, …, 0) with `n` spatial dimensions.
    pub fn origin(n: usize, curv: Curvature<T>) -> Self {
        let mut coords = vec![T::zero(); n + 1];
        coords[0] = curv.radius();
        LorentzPoint { coords }
    }

    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    pub fn time(&self) -> T {
        self.coords[0]
    }

    pub fn spatial(&self) -> &[T] {
        &self.coords[1..]
    }

    /// Number of spatial dimensions, i.e. the `n` of 𝕃ⁿ.
    pub fn dim(&self) -> usize {
        self.coords.len() - 1
    }

    /// |⟨x,x⟩_L − 1/K| — how far off the sheet the coordinates have drifted.
    pub fn manifold_drift(&self, curv: Curvature<T>) -> T {
        (lorentz_inner(&self.coords, &self.coords) - curv.inv_k()).abs()
    }
}

/// A tangent vector rooted at a specific point, ⟨z,x⟩_L = 0.
#[derive(Debug, Clone)]
pub struct TangentVector<T> {
    base: LorentzPoint<T>,
    components: Vec<T>,
}

impl<T: Scalar> TangentVector<T> {
    pub fn at(base: LorentzPoint<T>, components: Vec<T>) -> Self {
        debug_assert_eq!(base.coords().len(), components.len());
        TangentVector { base, components }
    }

    pub fn base(&self) -> &LorentzPoint<T> {
        &self.base
    }

    pub fn components(&self) -> &[T] {
        &self.components
    }

    /// ‖z‖_L = √⟨z,z⟩_L. Tangents at on-manifold points are spacelike, so the
    /// inner product is nonnegative up to rounding (clamped here).
    pub fn lorentz_norm(&self) -> T {
        lorentz_inner(&self.components, &self.components)
            .max(T::zero())
            .sqrt()
    }
}

/// Below this Lorentz norm a tangent is treated as zero and `exp_map`
/// returns its base point unchanged.
pub const EXP_ZERO_EPS: f64 = 1e-8;

/// Exponential map: follow the geodesic from `z.base` along `z` for its
/// length. `exp_x(z) = cosh(α)·x + sinh(α)·z/α` with `α = √(−K)·‖z‖_L`.
pub fn exp_map<T: Scalar>(z: &TangentVector<T>, curv: Curvature<T>) -> Result<LorentzPoint<T>> {
    let x = z.base.coords();
    let zz = lorentz_inner(z.components(), z.components());
    // A genuinely timelike "tangent" cannot come from a tangent space of the
    // upper sheet; tolerate only rounding-scale negatives.
    if zz < -T::c(1e-9) {
        return Err(Error::domain(
            "exp_map",
            format!("tangent is not spacelike: ⟨z,z⟩_L = {zz}"),
        ));
    }
    let norm = zz.max(T::zero()).sqrt();
    if norm < T::c(EXP_ZERO_EPS) {
        return Ok(z.base.clone());
    }
    let alpha = curv.sqrt_minus_k() * norm;
    let (ca, sa) = (alpha.cosh(), alpha.sinh());
    let coords: Vec<T> = x
        .iter()
        .zip(z.components())
        .map(|(&xi, &zi)| ca * xi + sa * zi / alpha)
        .collect();
    Ok(LorentzPoint { coords })
}

/// Logarithmic map, the inverse of `exp_map`:
/// `log_x(y) = arcosh(β)/√(β²−1) · (y − βx)` with `β = K⟨x,y⟩_L`.
/// β is clamped to ≥ 1 + 1e-12 — rounding can push it fractionally below 1
/// for near-identical points, where the true tangent is ≈ 0 anyway.
pub fn log_map<T: Scalar>(
    x: &LorentzPoint<T>,
    y: &LorentzPoint<T>,
    curv: Curvature<T>,
) -> TangentVector<T> {
    let beta_floor = T::one() + T::c(1e-12);
    let beta = (curv.k() * lorentz_inner(x.coords(), y.coords())).max(beta_floor);
    let scale = beta.acosh() / (beta * beta - T::one()).sqrt();
    let components: Vec<T> = x
        .coords()
        .iter()
        .zip(y.coords())
        .map(|(&xi, &yi)| scale * (yi - beta * xi))
        .collect();
    TangentVector {
        base: x.clone(),
        components,
    }
}

// ── linear isometries ───────────────────────────────────────────────────────

/// Dense row-major matrix, just big enough for the isometry bookkeeping the
/// verification suites need.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![T::zero(); n * n];
        for i in 0..n {
            data[i * n + i] = T::one();
        }
        Matrix {
            rows: n,
            cols: n,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        assert_eq!(self.cols, x.len(), "matrix-vector dimensions");
        let mut out = vec![T::zero(); self.rows];
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            let mut acc = T::zero();
            for (a, b) in row.iter().zip(x) {
                acc += *a * *b;
            }
            out[i] = acc;
        }
        out
    }

    pub fn matmul(&self, other: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.cols, other.rows, "matrix-matrix dimensions");
        let mut out = vec![T::zero(); self.rows * other.cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                let a = self.get(i, j);
                if a == T::zero() {
                    continue;
                }
                for l in 0..other.cols {
                    out[i * other.cols + l] += a * other.get(j, l);
                }
            }
        }
        Matrix::new(self.rows, other.cols, out)
    }

    pub fn max_abs_diff(&self, other: &Matrix<T>) -> T {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), |m, v| m.max(v))
    }

    /// Determinant by Gaussian elimination with partial pivoting — only used
    /// to validate small rotation blocks.
    pub fn det(&self) -> T {
        assert_eq!(self.rows, self.cols, "determinant of a square matrix");
        let n = self.rows;
        let mut a = self.data.clone();
        let mut det = T::one();
        for col in 0..n {
            let mut pivot = col;
            for r in col + 1..n {
                if a[r * n + col].abs() > a[pivot * n + col].abs() {
                    pivot = r;
                }
            }
            if a[pivot * n + col] == T::zero() {
                return T::zero();
            }
            if pivot != col {
                for j in 0..n {
                    a.swap(col * n + j, pivot * n + j);
                }
                det = -det;
            }
            let p = a[col * n + col];
            det *= p;
            for r in col + 1..n {
                let factor = a[r * n + col] / p;
                for j in col..n {
                    let v = a[col * n + j];
                    a[r * n + j] -= factor * v;
                }
            }
        }
        det
    }
}

/// Lorentz boost for velocity `v` (‖v‖ < 1):
/// `[[γ, −γvᵀ], [−γv, I + γ²/(1+γ)·vvᵀ]]` with `γ = 1/√(1−‖v‖²)`.
pub fn boost_matrix<T: Scalar>(v: &[T]) -> Result<Matrix<T>> {
    let n = v.len();
    let mut speed_sq = T::zero();
    for &vi in v {
        speed_sq += vi * vi;
    }
    if speed_sq >= T::one() {
        return Err(Error::domain(
            "boost_matrix",
            format!("‖v‖ = {} must be < 1", speed_sq.sqrt()),
        ));
    }
    let gamma = T::one() / (T::one() - speed_sq).sqrt();
    let outer_scale = gamma * gamma / (T::one() + gamma);
    let dim = n + 1;
    let mut m = Matrix::identity(dim);
    m.set(0, 0, gamma);
    for i in 0..n {
        m.set(0, i + 1, -gamma * v[i]);
        m.set(i + 1, 0, -gamma * v[i]);
        for j in 0..n {
            let base = if i == j { T::one() } else { T::zero() };
            m.set(i + 1, j + 1, base + outer_scale * v[i] * v[j]);
        }
    }
    Ok(m)
}

/// Embed a spatial rotation R̃ ∈ SO(n) as `[[1, 0ᵀ], [0, R̃]]`.
/// Rejects blocks that are not orthogonal with determinant +1.
pub fn rotation_matrix<T: Scalar>(spatial: &Matrix<T>) -> Result<Matrix<T>> {
    let n = spatial.rows();
    if spatial.cols() != n {
        return Err(Error::domain("rotation_matrix", "block must be square"));
    }
    // R̃ᵀR̃ = I within a rounding budget.
    let tol = T::c(1e-8);
    for i in 0..n {
        for j in 0..n {
            let mut acc = T::zero();
            for r in 0..n {
                acc += spatial.get(r, i) * spatial.get(r, j);
            }
            let want = if i == j { T::one() } else { T::zero() };
            if (acc - want).abs() > tol {
                return Err(Error::domain(
                    "rotation_matrix",
                    format!("block not orthogonal: (R̃ᵀR̃)[{i},{j}] = {acc}"),
                ));
            }
        }
    }
    let det = spatial.det();
    if (det - T::one()).abs() > T::c(1e-6) {
        return Err(Error::domain(
            "rotation_matrix",
            format!("block must have determinant +1, got {det}"),
        ));
    }
    let dim = n + 1;
    let mut m = Matrix::identity(dim);
    for i in 0..n {
        for j in 0..n {
            m.set(i + 1, j + 1, spatial.get(i, j));
        }
    }
    Ok(m)
}

// ── randomness (all ChaCha-seeded for reproducibility) ──────────────────────

/// Standard normal via Box–Muller; sampling happens in f64 and is converted,
/// so f32 and f64 runs draw the same underlying sequence.
pub fn normal<T: Scalar>(rng: &mut ChaCha8Rng) -> T {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    T::c((-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos())
}

/// Random on-manifold point: Gaussian spatial tangent at the origin with the
/// given scale, pushed through `exp_map`.
pub fn random_point<T: Scalar>(
    n: usize,
    curv: Curvature<T>,
    scale: f64,
    rng: &mut ChaCha8Rng,
) -> LorentzPoint<T> {
    let mut components = vec![T::zero(); n + 1];
    for c in components.iter_mut().skip(1) {
        *c = normal::<T>(rng) * T::c(scale);
    }
    let origin = LorentzPoint::origin(n, curv);
    exp_map(&TangentVector::at(origin, components), curv)
        .expect("spatial tangents at the origin are always spacelike")
}

/// Random tangent at `x`: a Gaussian ambient vector projected onto the
/// tangent space, z = g − K⟨g,x⟩_L·x.
pub fn random_tangent<T: Scalar>(
    x: &LorentzPoint<T>,
    curv: Curvature<T>,
    scale: f64,
    rng: &mut ChaCha8Rng,
) -> TangentVector<T> {
    let g: Vec<T> = (0..x.coords().len())
        .map(|_| normal::<T>(rng) * T::c(scale))
        .collect();
    let coef = curv.k() * lorentz_inner(&g, x.coords());
    let components: Vec<T> = g
        .iter()
        .zip(x.coords())
        .map(|(&gi, &xi)| gi - coef * xi)
        .collect();
    TangentVector::at(x.clone(), components)
}

/// Random rotation block in SO(n): Gram–Schmidt on a Gaussian matrix, then a
/// column flip if the determinant came out −1.
pub fn random_rotation_block<T: Scalar>(n: usize, rng: &mut ChaCha8Rng) -> Matrix<T> {
    loop {
        let mut cols: Vec<Vec<T>> = (0..n)
            .map(|_| (0..n).map(|_| normal::<T>(rng)).collect())
            .collect();
        let mut ok = true;
        for i in 0..n {
            for j in 0..i {
                let mut dot = T::zero();
                for r in 0..n {
                    dot += cols[i][r] * cols[j][r];
                }
                for r in 0..n {
                    let v = cols[j][r];
                    cols[i][r] -= dot * v;
                }
            }
            let mut norm = T::zero();
            for r in 0..n {
                norm += cols[i][r] * cols[i][r];
            }
            let norm = norm.sqrt();
            if norm < T::c(1e-6) {
                ok = false; // degenerate draw; resample
                break;
            }
            for r in 0..n {
                cols[i][r] /= norm;
            }
        }
        if !ok {
            continue;
        }
        let mut data = vec![T::zero(); n * n];
        for (j, col) in cols.iter().enumerate() {
            for i in 0..n {
                data[i * n + j] = col[i];
            }
        }
        let mut m = Matrix::new(n, n, data);
        if (m.det() - T::one()).abs() > T::c(0.5) {
            // det = −1: flip the first column to land in SO(n).
            for i in 0..n {
                let v = m.get(i, 0);
                m.set(i, 0, -v);
            }
        }
        return m;
    }
}

/// Random boost with speed drawn uniformly from [0, max_speed].
pub fn random_boost<T: Scalar>(
    n: usize,
    max_speed: f64,
    rng: &mut ChaCha8Rng,
) -> Matrix<T> {
    let speed = T::c(rng.gen_range(0.0..max_speed));
    let mut dir: Vec<T> = (0..n).map(|_| normal::<T>(rng)).collect();
    let mut norm = T::zero();
    for &d in &dir {
        norm += d * d;
    }
    let norm = norm.sqrt().max(T::c(1e-12));
    for d in &mut dir {
        *d = *d / norm * speed;
    }
    boost_matrix(&dir).expect("speed < 1 by construction")
}
