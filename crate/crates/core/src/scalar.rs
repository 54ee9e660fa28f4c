//! Scalar abstraction so every module works at both precisions.
//!
//! All geometry and training code is generic over [`Scalar`]; `f64` is the
//! default everywhere and `f32` exists as a reduced-precision mode whose wider
//! tolerances are encoded here rather than sprinkled through call sites.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};

/// Width tag recorded in checkpoints so a reader knows how to decode buffers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarWidth {
    F32,
    F64,
}

impl ScalarWidth {
    pub fn bytes(self) -> usize {
        match self {
            ScalarWidth::F32 => 4,
            ScalarWidth::F64 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScalarWidth::F32 => "f32",
            ScalarWidth::F64 => "f64",
        }
    }
}

/// Floating-point element type for tensors and manifold points.
pub trait Scalar:
    Float
    + FromPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    const WIDTH: ScalarWidth;

    /// Convert a compile-time constant. Panics only if the value does not fit,
    /// which cannot happen for the finite literals used in this crate.
    #[inline]
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("constant representable in scalar type")
    }

    #[inline]
    fn to_f64c(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }

    /// How far off the hyperboloid a point may drift before validation
    /// complains. f32 arithmetic accumulates error ~1e6 times faster.
    fn on_manifold_tol() -> Self;

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const WIDTH: ScalarWidth = ScalarWidth::F32;

    fn on_manifold_tol() -> Self {
        1e-3
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().expect("4 bytes for f32"))
    }
}

impl Scalar for f64 {
    const WIDTH: ScalarWidth = ScalarWidth::F64;

    fn on_manifold_tol() -> Self {
        1e-9
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().expect("8 bytes for f64"))
    }
}
