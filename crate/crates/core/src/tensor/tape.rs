//! Tape storage and the reverse pass.

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::Tensor;

/// One operand of a recorded operation: the producing node (if the operand
/// participates in the graph) plus a handle on its forward value, which most
/// backward rules need.
pub(crate) struct Arg<T> {
    pub node: Option<usize>,
    pub data: Rc<[T]>,
}

impl<T: Scalar> Arg<T> {
    pub fn of(t: &Tensor<'_, T>) -> Self {
        Arg {
            node: t.node,
            data: Rc::clone(&t.data),
        }
    }
}

pub(crate) enum Op<T> {
    Leaf,
    /// 2-D product after rank normalisation: `a` is m×k, `b` is k×n.
    Matmul {
        a: Arg<T>,
        b: Arg<T>,
        m: usize,
        k: usize,
        n: usize,
    },
    Add { a: Arg<T>, b: Arg<T> },
    Sub { a: Arg<T>, b: Arg<T> },
    Mul { a: Arg<T>, b: Arg<T> },
    Div { a: Arg<T>, b: Arg<T> },
    Neg { a: Arg<T> },
    Sum { a: Arg<T> },
    Mean { a: Arg<T> },
    Concat { parts: Vec<Arg<T>>, widths: Vec<usize>, rows: usize },
    /// Contiguous window `[start, start+width)` of the last axis.
    SliceLast { a: Arg<T>, start: usize, width: usize, last: usize },
    /// Single row of a 2-D tensor (embedding lookup).
    Row { a: Arg<T>, index: usize, width: usize },
    Norm2 { a: Arg<T>, out: T },
    Sqrt { a: Arg<T>, out: Rc<[T]> },
    Square { a: Arg<T> },
    Exp { a: Arg<T>, out: Rc<[T]> },
    Log { a: Arg<T> },
    Cosh { a: Arg<T> },
    Sinh { a: Arg<T> },
    /// `a.data` holds the *clamped* inputs (≥ 1 + 1e-12), keeping the
    /// derivative finite at the domain edge.
    Arcosh { a: Arg<T> },
    Sigmoid { a: Arg<T>, out: Rc<[T]> },
    Softmax { a: Arg<T>, out: Rc<[T]>, width: usize },
    /// Mask entries are 0 or 1/keep, so forward and backward are the same
    /// elementwise product.
    Dropout { a: Arg<T>, mask: Rc<[T]> },
    ClampMin { a: Arg<T>, min: T },
}

pub(crate) struct Node<T> {
    pub op: Op<T>,
}

/// Records operations; owns nothing about parameter identity. Create one per
/// training step and drop it after the gradients have been consumed.
pub struct Tape<T: Scalar> {
    pub(crate) nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub(crate) fn push(&self, op: Op<T>) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { op });
        nodes.len() - 1
    }

    /// A differentiable leaf. Gradients are collected per leaf after
    /// `backward`; leaves that end up unused simply read back as zero.
    pub fn leaf<'t>(&'t self, shape: &[usize], data: Vec<T>) -> Tensor<'t, T> {
        self.leaf_shared(shape, data.into())
    }

    /// Like [`Tape::leaf`], but reuses an existing shared buffer.
    pub fn leaf_shared<'t>(&'t self, shape: &[usize], data: Rc<[T]>) -> Tensor<'t, T> {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "leaf: shape {:?} disagrees with buffer of {} elements",
            shape,
            data.len()
        );
        let node = self.push(Op::Leaf);
        Tensor {
            tape: Some(self),
            node: Some(node),
            shape: shape.to_vec(),
            data,
        }
    }

    /// Reverse pass from a scalar root. Returns one gradient buffer per
    /// reachable node; query with [`Gradients::wrt`].
    pub fn backward(&self, root: &Tensor<'_, T>) -> Result<Gradients<T>> {
        if root.len() != 1 {
            return Err(Error::InvalidArgument(format!(
                "backward root must have exactly one element, got shape {:?}",
                root.shape()
            )));
        }
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Vec<T>>> = vec![None; nodes.len()];
        let Some(root_id) = root.node else {
            // Constant root: nothing participates, every gradient is zero.
            return Ok(Gradients { grads });
        };
        grads[root_id] = Some(vec![T::one()]);

        for id in (0..=root_id).rev() {
            let Some(g) = grads[id].take() else { continue };
            backprop(&nodes[id].op, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

/// Gradient buffers produced by one reverse pass, indexed by tape node.
pub struct Gradients<T: Scalar> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the backward root with respect to `t`, or `None` when `t`
    /// never influenced the root (including constants). Callers that need a
    /// dense buffer use [`Gradients::wrt_or_zeros`].
    pub fn wrt(&self, t: &Tensor<'_, T>) -> Option<&[T]> {
        let id = t.node?;
        self.grads.get(id).and_then(|g| g.as_deref())
    }

    pub fn wrt_or_zeros(&self, t: &Tensor<'_, T>) -> Vec<T> {
        self.wrt(t)
            .map(|g| g.to_vec())
            .unwrap_or_else(|| vec![T::zero(); t.len()])
    }
}

fn accumulate<T: Scalar>(
    grads: &mut [Option<Vec<T>>],
    target: Option<usize>,
    len: usize,
    add: impl Fn(&mut [T]),
) {
    let Some(id) = target else { return };
    let slot = grads[id].get_or_insert_with(|| vec![T::zero(); len]);
    add(slot);
}

/// Add `g`, reduced if the operand was a broadcast scalar, into its slot.
fn accumulate_broadcast<T: Scalar>(
    grads: &mut [Option<Vec<T>>],
    arg: &Arg<T>,
    contrib: &[T],
) {
    let alen = arg.data.len();
    accumulate(grads, arg.node, alen, |slot| {
        if alen == contrib.len() {
            for (s, c) in slot.iter_mut().zip(contrib) {
                *s += *c;
            }
        } else {
            debug_assert_eq!(alen, 1, "broadcast operand must be a scalar");
            let mut total = T::zero();
            for c in contrib {
                total += *c;
            }
            slot[0] += total;
        }
    });
}

fn backprop<T: Scalar>(op: &Op<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
    match op {
        Op::Leaf => {}

        Op::Matmul { a, b, m, k, n } => {
            let (m, k, n) = (*m, *k, *n);
            // dA = G Bᵀ
            if a.node.is_some() {
                let mut da = vec![T::zero(); m * k];
                for i in 0..m {
                    for j in 0..k {
                        let mut acc = T::zero();
                        for l in 0..n {
                            acc += g[i * n + l] * b.data[j * n + l];
                        }
                        da[i * k + j] = acc;
                    }
                }
                accumulate(grads, a.node, m * k, |slot| {
                    for (s, c) in slot.iter_mut().zip(&da) {
                        *s += *c;
                    }
                });
            }
            // dB = Aᵀ G
            if b.node.is_some() {
                let mut db = vec![T::zero(); k * n];
                for j in 0..k {
                    for l in 0..n {
                        let mut acc = T::zero();
                        for i in 0..m {
                            acc += a.data[i * k + j] * g[i * n + l];
                        }
                        db[j * n + l] = acc;
                    }
                }
                accumulate(grads, b.node, k * n, |slot| {
                    for (s, c) in slot.iter_mut().zip(&db) {
                        *s += *c;
                    }
                });
            }
        }

        Op::Add { a, b } => {
            if a.node.is_some() {
                accumulate_broadcast(grads, a, g);
            }
            if b.node.is_some() {
                accumulate_broadcast(grads, b, g);
            }
        }

        Op::Sub { a, b } => {
            if a.node.is_some() {
                accumulate_broadcast(grads, a, g);
            }
            if b.node.is_some() {
                let neg: Vec<T> = g.iter().map(|v| -*v).collect();
                accumulate_broadcast(grads, b, &neg);
            }
        }

        Op::Mul { a, b } => {
            let out_len = g.len();
            if a.node.is_some() {
                let contrib: Vec<T> = (0..out_len)
                    .map(|i| g[i] * pick(&b.data, i))
                    .collect();
                accumulate_broadcast(grads, a, &contrib);
            }
            if b.node.is_some() {
                let contrib: Vec<T> = (0..out_len)
                    .map(|i| g[i] * pick(&a.data, i))
                    .collect();
                accumulate_broadcast(grads, b, &contrib);
            }
        }

        Op::Div { a, b } => {
            let out_len = g.len();
            if a.node.is_some() {
                let contrib: Vec<T> = (0..out_len)
                    .map(|i| g[i] / pick(&b.data, i))
                    .collect();
                accumulate_broadcast(grads, a, &contrib);
            }
            if b.node.is_some() {
                let contrib: Vec<T> = (0..out_len)
                    .map(|i| {
                        let bv = pick(&b.data, i);
                        -g[i] * pick(&a.data, i) / (bv * bv)
                    })
                    .collect();
                accumulate_broadcast(grads, b, &contrib);
            }
        }

        Op::Neg { a } => {
            let contrib: Vec<T> = g.iter().map(|v| -*v).collect();
            accumulate_broadcast(grads, a, &contrib);
        }

        Op::Sum { a } => {
            let alen = a.data.len();
            accumulate(grads, a.node, alen, |slot| {
                for s in slot.iter_mut() {
                    *s += g[0];
                }
            });
        }

        Op::Mean { a } => {
            let alen = a.data.len();
            let scale = g[0] / T::from_usize(alen).expect("len fits scalar");
            accumulate(grads, a.node, alen, |slot| {
                for s in slot.iter_mut() {
                    *s += scale;
                }
            });
        }

        Op::Concat { parts, widths, rows } => {
            let total: usize = widths.iter().sum();
            for (part, (&w, offset)) in parts.iter().zip(widths.iter().zip(prefix_sums(widths))) {
                if part.node.is_none() {
                    continue;
                }
                let plen = part.data.len();
                accumulate(grads, part.node, plen, |slot| {
                    for r in 0..*rows {
                        for c in 0..w {
                            slot[r * w + c] += g[r * total + offset + c];
                        }
                    }
                });
            }
        }

        Op::SliceLast { a, start, width, last } => {
            let alen = a.data.len();
            let rows = alen / last;
            accumulate(grads, a.node, alen, |slot| {
                for r in 0..rows {
                    for c in 0..*width {
                        slot[r * last + start + c] += g[r * width + c];
                    }
                }
            });
        }

        Op::Row { a, index, width } => {
            let alen = a.data.len();
            accumulate(grads, a.node, alen, |slot| {
                for c in 0..*width {
                    slot[index * width + c] += g[c];
                }
            });
        }

        Op::Norm2 { a, out } => {
            let alen = a.data.len();
            if *out == T::zero() {
                return; // ‖·‖ is not differentiable at 0; define the pullback as 0
            }
            let scale = g[0] / *out;
            accumulate(grads, a.node, alen, |slot| {
                for (s, x) in slot.iter_mut().zip(a.data.iter()) {
                    *s += scale * *x;
                }
            });
        }

        Op::Sqrt { a, out } => {
            let contrib: Vec<T> = g
                .iter()
                .zip(out.iter())
                .map(|(gv, y)| *gv / (T::c(2.0) * *y))
                .collect();
            accumulate_broadcast(grads, a, &contrib);
        }

        Op::Square { a } => {
            let contrib: Vec<T> = g
                .iter()
                .zip(a.data.iter())
                .map(|(gv, x)| T::c(2.0) * *x * *gv)
                .collect();
            accumulate_broadcast(grads, a, &contrib);
        }

        Op::Exp { a, out } => {
            let contrib: Vec<T> = g.iter().zip(out.iter()).map(|(gv, y)| *gv * *y).collect();
            accumulate_broadcast(grads, a, &contrib);
        }

        Op::Log { a } => {
            let contrib: Vec<T> = g
                .iter()
                .zip(a.data.iter())
                .map(|(gv, x)| *gv / *x)
                .collect();
            accumulate_broadcast(grads, a, &contrib);
        }

        Op::Cosh { a } => {
            let contrib: Vec<T> = g
                .iter()
                .zip(a.data.iter())
                .map(|(gv, x)| *gv * x.sinh())
                .collect();
            accumulate_broadcast(grads, a, &contrib);
        }

        Op::Sinh { a } => {
            let contrib: Vec<T> = g
                .iter()
                .zip(a.data.iter())
                .map(|(gv, x)| *gv * x.cosh())
                .collect();
            accumulate_broadcast(grads, a, &contrib);
        }

        Op::Arcosh { a } => {
            // d/dx arcosh(x) = 1/√(x²−1); inputs were clamped ≥ 1+1e-12.
            let contrib: Vec<T> = g
                .iter()
                .zip(a.data.iter())
                .map(|(gv, x)| *gv / (*x * *x - T::one()).sqrt())
                .collect();
            accumulate_broadcast(grads, a, &contrib);
        }

        Op::Sigmoid { a, out } => {
            let contrib: Vec<T> = g
                .iter()
                .zip(out.iter())
                .map(|(gv, y)| *gv * *y * (T::one() - *y))
                .collect();
            accumulate_broadcast(grads, a, &contrib);
        }

        Op::Softmax { a, out, width } => {
            let alen = a.data.len();
            let w = *width;
            let rows = alen / w;
            accumulate(grads, a.node, alen, |slot| {
                for r in 0..rows {
                    let p = &out[r * w..(r + 1) * w];
                    let gr = &g[r * w..(r + 1) * w];
                    let mut dot = T::zero();
                    for (pv, gv) in p.iter().zip(gr) {
                        dot += *pv * *gv;
                    }
                    for c in 0..w {
                        slot[r * w + c] += p[c] * (gr[c] - dot);
                    }
                }
            });
        }

        Op::Dropout { a, mask } => {
            let contrib: Vec<T> = g.iter().zip(mask.iter()).map(|(gv, m)| *gv * *m).collect();
            accumulate_broadcast(grads, a, &contrib);
        }

        Op::ClampMin { a, min } => {
            let contrib: Vec<T> = g
                .iter()
                .zip(a.data.iter())
                .map(|(gv, x)| if *x > *min { *gv } else { T::zero() })
                .collect();
            accumulate_broadcast(grads, a, &contrib);
        }
    }
}

#[inline]
fn pick<T: Scalar>(data: &[T], i: usize) -> T {
    // Scalar operands broadcast against any shape.
    if data.len() == 1 {
        data[0]
    } else {
        data[i]
    }
}

fn prefix_sums(widths: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(widths.len());
    let mut acc = 0;
    for w in widths {
        out.push(acc);
        acc += w;
    }
    out
}
