//! Reverse-mode automatic differentiation on a flat tape.
//!
//! A [`Tape`] records every differentiable operation as a node; calling
//! [`Tape::backward`] on a scalar result walks the nodes once in reverse and
//! accumulates vector-Jacobian products. Tensors are cheap handles: a shape, a
//! shared data buffer, and (when the value participates in the graph) the id
//! of the node that produced it.
//!
//! Design rules kept deliberately strict so every backward rule stays
//! auditable:
//! * elementwise binary ops broadcast only scalar-vs-tensor, never row-wise;
//! * reductions (`sum`, `mean`, `norm2`) always collapse to one element;
//! * `softmax` and `concat` act on the last axis only.
//!
//! A tape and its tensors form a single-owner unit; nothing here is `Send`,
//! and parallelism (if any) happens across independent tapes.

mod gradcheck;
mod ops;
mod tape;


pub use gradcheck::{finite_difference_check, FdElement, FdReport};
pub use tape::{Gradients, Tape};

use std::rc::Rc;

use crate::scalar::Scalar;

/// Handle to an n-dimensional value, optionally attached to a tape node.
#[derive(Clone)]
pub struct Tensor<'t, T: Scalar> {
    pub(crate) tape: Option<&'t Tape<T>>,
    pub(crate) node: Option<usize>,
    pub(crate) shape: Vec<usize>,
    pub(crate) data: Rc<[T]>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<'t, T: Scalar> Tensor<'t, T> {
    /// A tensor that does not participate in differentiation.
    pub fn constant(shape: &[usize], data: Vec<T>) -> Self {
        Tensor::from_shared(shape, data.into())
    }

    /// A constant tensor over an existing shared buffer (no copy).
    pub fn from_shared(shape: &[usize], data: Rc<[T]>) -> Self {
        assert_eq!(
            numel(shape),
            data.len(),
            "constant: shape {:?} disagrees with buffer of {} elements",
            shape,
            data.len()
        );
        Tensor {
            tape: None,
            node: None,
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn scalar(v: T) -> Self {
        Tensor::constant(&[1], vec![v])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn requires_grad(&self) -> bool {
        self.node.is_some()
    }

    /// Extract the value of a one-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    /// The tape shared by `self` and `other`, if either is attached to one.
    /// Panics if the two tensors come from different tapes — mixing tapes is
    /// a programming error, not a recoverable condition.
    pub(crate) fn joint_tape(&self, other: &Tensor<'t, T>) -> Option<&'t Tape<T>> {
        match (self.tape, other.tape) {
            (Some(a), Some(b)) => {
                assert!(std::ptr::eq(a, b), "tensors belong to different tapes");
                Some(a)
            }
            (Some(a), None) => Some(a),
            (None, Some(b)) => Some(b),
            (None, None) => None,
        }
    }

}

impl<T: Scalar> std::fmt::Debug for Tensor<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("grad", &self.requires_grad())
            .field("data", &&self.data[..self.data.len().min(8)])
            .finish()
    }
}
