//! Neural layers that operate directly in Lorentz coordinates.
//!
//! Every layer output is an on-manifold point by construction — there is no
//! tangent-space round-tripping and no projection step anywhere in a forward
//! pass. The module splits into pure reference functions (slice/matrix
//! arithmetic, used by the verification suites) and taped layers that carry
//! [`crate::params::Param`]s.

mod attention;
mod linear;
mod transform;

pub use attention::{attention, centroid_t, MultiHeadAttention};
pub use linear::{position_encode, Activation, LinearCfg, LorentzLinear, LorentzResidual};
pub use transform::{
    centroid_point, lift_spatial_t, lorentz_inner_t, rescale_for_point, spatial_map_point,
    spatial_map_t, squared_distance_t, tangent_rotation_matrix,
};

#[cfg(test)]
mod tests;
