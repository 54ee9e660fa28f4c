//! Hyperbolic neural networks on the Lorentz model of hyperbolic space.
//!
//! Everything operates directly in Lorentz coordinates — linear layers,
//! attention, residuals, and the toy models built from them — so no
//! exponential/logarithmic round-trips through tangent space are needed in
//! the hot path, and every layer output lands back on the hyperboloid by
//! construction.
//!
//! The crate is generic over the scalar type ([`Scalar`], implemented for
//! `f32` and `f64`); `f64` is the default precision and `f32` is a supported
//! reduced-precision mode with correspondingly looser manifold tolerances.

pub mod checkpoint;
pub mod datasets;
pub mod error;
pub mod layers;
pub mod manifold;
pub mod metrics;
pub mod models;
pub mod params;
pub mod scalar;
pub mod tensor;
pub mod training;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::{Scalar, ScalarWidth};

/// Default-precision aliases. The generic types remain available for `f32`.
pub type Tape64 = tensor::Tape<f64>;
pub type Tensor64<'t> = tensor::Tensor<'t, f64>;
pub type Tape32 = tensor::Tape<f32>;
pub type Tensor32<'t> = tensor::Tensor<'t, f32>;
