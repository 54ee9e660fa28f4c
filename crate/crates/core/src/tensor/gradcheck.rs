//! Central-difference validation of the reverse pass.
//!
//! The numeric side never touches `backward` — it evaluates the function on
//! perturbed constants — so the two gradient estimates are fully independent.
//! The function under test must be deterministic across calls: freeze any
//! dropout masks or sampled negatives before checking.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{Tape, Tensor};

#[derive(Debug, Clone)]
pub struct FdElement<T> {
    pub index: usize,
    pub analytic: T,
    pub numeric: T,
    pub rel_err: T,
    pub skipped: bool,
}

#[derive(Debug, Clone)]
pub struct FdReport<T> {
    pub elements: Vec<FdElement<T>>,
    /// Maximum relative error over non-skipped elements.
    pub max_rel_err: T,
    pub checked: usize,
    pub pass: bool,
}

/// Relative error with an absolute floor, so near-zero pairs compare cleanly.
pub fn relative_error<T: Scalar>(numeric: T, analytic: T) -> T {
    let denom = (numeric.abs() + analytic.abs()).max(T::c(1e-8));
    (numeric - analytic).abs() / denom
}

/// Compare the tape gradient of `f` at `x0` against central differences with
/// step `h`. `f` must reduce to a single element. `skip(index, value)` lets a
/// caller exclude elements sitting within the non-differentiable margin of a
/// kink (e.g. within `10h` of a clamp threshold).
pub fn finite_difference_check<T, F>(
    f: F,
    x0: &[T],
    shape: &[usize],
    h: T,
    tol: T,
    skip: Option<&dyn Fn(usize, T) -> bool>,
) -> Result<FdReport<T>>
where
    T: Scalar,
    F: for<'a> Fn(&'a Tape<T>, &Tensor<'a, T>) -> Result<Tensor<'a, T>>,
{
    // Analytic gradient via one taped forward + backward.
    let tape = Tape::new();
    let x = tape.leaf(shape, x0.to_vec());
    let y = f(&tape, &x)?;
    if y.len() != 1 {
        return Err(Error::InvalidArgument(format!(
            "finite_difference_check needs a scalar function, got shape {:?}",
            y.shape()
        )));
    }
    let grads = tape.backward(&y)?;
    let analytic = grads.wrt_or_zeros(&x);

    // Numeric side: evaluate on perturbed constants (no recording at all).
    let eval = |data: Vec<T>| -> Result<T> {
        let scratch = Tape::new();
        let t = Tensor::constant(shape, data);
        Ok(f(&scratch, &t)?.item())
    };

    let two_h = T::c(2.0) * h;
    let mut elements = Vec::with_capacity(x0.len());
    let mut max_rel = T::zero();
    let mut checked = 0;
    for i in 0..x0.len() {
        if skip.map(|s| s(i, x0[i])).unwrap_or(false) {
            elements.push(FdElement {
                index: i,
                analytic: analytic[i],
                numeric: T::nan(),
                rel_err: T::zero(),
                skipped: true,
            });
            continue;
        }
        let mut plus = x0.to_vec();
        plus[i] += h;
        let mut minus = x0.to_vec();
        minus[i] -= h;
        let numeric = (eval(plus)? - eval(minus)?) / two_h;
        let rel = relative_error(numeric, analytic[i]);
        if rel > max_rel {
            max_rel = rel;
        }
        checked += 1;
        elements.push(FdElement {
            index: i,
            analytic: analytic[i],
            numeric,
            rel_err: rel,
            skipped: false,
        });
    }

    Ok(FdReport {
        elements,
        max_rel_err: max_rel,
        checked,
        pass: max_rel <= tol,
    })
}
