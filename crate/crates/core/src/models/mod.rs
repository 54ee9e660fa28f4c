//! Task heads assembled from the layer library: knowledge-graph completion,
//! a graph convolution stack with link-prediction / node-classification
//! decoders, and a small transformer encoder for masked reconstruction.

pub mod gcn;
pub mod kg;
pub mod transformer;

pub use gcn::{fermi_dirac, GcnConfig, GcnModel};
pub use kg::{KgConfig, KgMetrics, KgModel};
pub use transformer::{ToyTransformer, TransformerConfig};

use crate::error::{Error, Result};
use crate::layers::squared_distance_t;
use crate::manifold::Curvature;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Entity-typing style probability head: `σ(−d²_L(repr, type_emb)/α + β)`.
/// A demonstrative decoder — differentiable when the inputs carry a tape.
pub fn type_probability<'t, T: Scalar>(
    repr: &Tensor<'t, T>,
    type_emb: &Tensor<'t, T>,
    alpha: T,
    beta: T,
    curv: Curvature<T>,
) -> Result<Tensor<'t, T>> {
    if alpha == T::zero() {
        return Err(Error::domain("type_probability", "alpha must be nonzero"));
    }
    let d2 = squared_distance_t(repr, type_emb, curv)?;
    d2.neg()
        .div(&Tensor::scalar(alpha))?
        .add(&Tensor::scalar(beta))
        .map(|s| s.sigmoid())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::LorentzPoint;
    use crate::tensor::finite_difference_check;
    use crate::tensor::{Tape, Tensor};

    fn curv() -> Curvature<f64> {
        Curvature::standard()
    }

    #[test]
    fn type_probability_reduces_to_sigmoid_of_beta_at_zero_distance() {
        let p = LorentzPoint::from_spatial(&[0.3, -0.7], curv());
        let x = Tensor::constant(&[3], p.coords().to_vec());
        let prob = type_probability(&x, &x, 2.0, 1.5, curv()).unwrap().item();
        let expect = 1.0 / (1.0 + (-1.5_f64).exp());
        assert!(
            (prob - expect).abs() < 1e-12,
            "identical points: want σ(β) = {expect}, got {prob}"
        );
    }

    #[test]
    fn type_probability_beta_cancellation_gives_half() {
        let a = LorentzPoint::from_spatial(&[0.5, 0.0], curv());
        let b = LorentzPoint::from_spatial(&[-0.2, 0.4], curv());
        let d2 = crate::manifold::squared_distance(a.coords(), b.coords(), curv());
        let alpha = 1.7;
        let x = Tensor::constant(&[3], a.coords().to_vec());
        let y = Tensor::constant(&[3], b.coords().to_vec());
        let p = type_probability(&x, &y, alpha, d2 / alpha, curv()).unwrap().item();
        assert!((p - 0.5).abs() < 1e-12, "β = d²/α must cancel to 0.5, got {p}");
    }

    #[test]
    fn type_probability_rejects_zero_alpha() {
        let x = Tensor::constant(&[3], LorentzPoint::from_spatial(&[0.1, 0.1], curv()).coords().to_vec());
        assert!(type_probability(&x, &x, 0.0, 0.0, curv()).is_err());
    }

    #[test]
    fn type_probability_gradient_matches_finite_differences() {
        let emb = LorentzPoint::from_spatial(&[0.4, -0.3], curv());
        let x0 = LorentzPoint::from_spatial(&[-0.1, 0.6], curv());
        type FdFn<'c> = dyn for<'a> Fn(&'a Tape<f64>, &Tensor<'a, f64>) -> crate::Result<Tensor<'a, f64>> + 'c;
        let f: &FdFn = &|_tape, leaf| {
            let e = Tensor::constant(&[3], emb.coords().to_vec());
            type_probability(leaf, &e, 1.3, -0.2, Curvature::standard())
        };
        let report = finite_difference_check(f, x0.coords(), &[3], 1e-6, 1e-5, None).unwrap();
        assert!(report.pass, "max rel err {}", report.max_rel_err);
    }
}
