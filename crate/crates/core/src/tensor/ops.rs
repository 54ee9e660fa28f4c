//! Forward implementations. Every op validates shapes eagerly, computes the
//! result, and records a node only when at least one operand participates in
//! the graph — so evaluation-mode code pays nothing for the tape.

use std::rc::Rc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::tape::{Arg, Op, Tape};
use super::Tensor;

fn emit<'t, T: Scalar>(
    tape: Option<&'t Tape<T>>,
    participates: bool,
    shape: Vec<usize>,
    data: Rc<[T]>,
    op: impl FnOnce() -> Op<T>,
) -> Tensor<'t, T> {
    match tape {
        Some(tp) if participates => {
            let node = tp.push(op());
            Tensor {
                tape,
                node: Some(node),
                shape,
                data,
            }
        }
        _ => Tensor {
            tape,
            node: None,
            shape,
            data,
        },
    }
}

/// Shape agreement for elementwise binary ops: identical shapes, or one side
/// is a single element (scalar broadcast). Nothing row-wise.
fn binary_shape<'s>(
    op: &'static str,
    a: &'s Tensor<'_, impl Scalar>,
    b: &'s Tensor<'_, impl Scalar>,
) -> Result<&'s [usize]> {
    if a.shape == b.shape {
        Ok(&a.shape)
    } else if a.len() == 1 {
        Ok(&b.shape)
    } else if b.len() == 1 {
        Ok(&a.shape)
    } else {
        Err(Error::ShapeMismatch {
            op,
            lhs: a.shape.clone(),
            rhs: b.shape.clone(),
        })
    }
}

#[inline]
fn pick<T: Scalar>(data: &[T], i: usize) -> T {
    if data.len() == 1 {
        data[0]
    } else {
        data[i]
    }
}

impl<'t, T: Scalar> Tensor<'t, T> {
    fn binary(
        &self,
        other: &Tensor<'t, T>,
        name: &'static str,
        f: impl Fn(T, T) -> T,
        op: impl FnOnce(Arg<T>, Arg<T>) -> Op<T>,
    ) -> Result<Tensor<'t, T>> {
        let shape = binary_shape(name, self, other)?.to_vec();
        let n = shape.iter().product();
        let data: Vec<T> = (0..n)
            .map(|i| f(pick(&self.data, i), pick(&other.data, i)))
            .collect();
        let tape = self.joint_tape(other);
        let participates = self.node.is_some() || other.node.is_some();
        Ok(emit(tape, participates, shape, data.into(), || {
            op(Arg::of(self), Arg::of(other))
        }))
    }

    pub fn add(&self, other: &Tensor<'t, T>) -> Result<Tensor<'t, T>> {
        self.binary(other, "add", |a, b| a + b, |a, b| Op::Add { a, b })
    }

    pub fn sub(&self, other: &Tensor<'t, T>) -> Result<Tensor<'t, T>> {
        self.binary(other, "sub", |a, b| a - b, |a, b| Op::Sub { a, b })
    }

    pub fn mul(&self, other: &Tensor<'t, T>) -> Result<Tensor<'t, T>> {
        self.binary(other, "mul", |a, b| a * b, |a, b| Op::Mul { a, b })
    }

    pub fn div(&self, other: &Tensor<'t, T>) -> Result<Tensor<'t, T>> {
        self.binary(other, "div", |a, b| a / b, |a, b| Op::Div { a, b })
    }

    /// Matrix product with rank-1 conveniences: `[m,k]×[k,n] → [m,n]`,
    /// `[k]×[k,n] → [n]`, `[m,k]×[k] → [m]`, `[k]×[k] → [1]` (dot product).
    pub fn matmul(&self, other: &Tensor<'t, T>) -> Result<Tensor<'t, T>> {
        let mismatch = || Error::ShapeMismatch {
            op: "matmul",
            lhs: self.shape.clone(),
            rhs: other.shape.clone(),
        };
        let (m, k, out_head): (usize, usize, Option<usize>) = match self.shape.as_slice() {
            [m, k] => (*m, *k, Some(*m)),
            [k] => (1, *k, None),
            _ => return Err(mismatch()),
        };
        let (k2, n, out_tail): (usize, usize, Option<usize>) = match other.shape.as_slice() {
            [k2, n] => (*k2, *n, Some(*n)),
            [k2] => (*k2, 1, None),
            _ => return Err(mismatch()),
        };
        if k != k2 {
            return Err(mismatch());
        }
        let mut data = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..k {
                let av = self.data[i * k + j];
                if av == T::zero() {
                    continue;
                }
                let brow = &other.data[j * n..(j + 1) * n];
                let crow = &mut data[i * n..(i + 1) * n];
                for (c, b) in crow.iter_mut().zip(brow) {
                    *c += av * *b;
                }
            }
        }
        let shape: Vec<usize> = match (out_head, out_tail) {
            (Some(m), Some(n)) => vec![m, n],
            (Some(m), None) => vec![m],
            (None, Some(n)) => vec![n],
            (None, None) => vec![1],
        };
        let tape = self.joint_tape(other);
        let participates = self.node.is_some() || other.node.is_some();
        Ok(emit(tape, participates, shape, data.into(), || Op::Matmul {
            a: Arg::of(self),
            b: Arg::of(other),
            m,
            k,
            n,
        }))
    }

    fn unary(
        &self,
        f: impl Fn(T) -> T,
        op: impl FnOnce(Arg<T>) -> Op<T>,
    ) -> Tensor<'t, T> {
        let data: Vec<T> = self.data.iter().map(|x| f(*x)).collect();
        emit(
            self.tape,
            self.node.is_some(),
            self.shape.clone(),
            data.into(),
            || op(Arg::of(self)),
        )
    }

    /// Unary op whose backward rule wants the *output* values.
    fn unary_saving(
        &self,
        f: impl Fn(T) -> T,
        op: impl FnOnce(Arg<T>, Rc<[T]>) -> Op<T>,
    ) -> Tensor<'t, T> {
        let data: Rc<[T]> = self
            .data
            .iter()
            .map(|x| f(*x))
            .collect::<Vec<T>>()
            .into();
        emit(
            self.tape,
            self.node.is_some(),
            self.shape.clone(),
            Rc::clone(&data),
            || op(Arg::of(self), data),
        )
    }

    pub fn neg(&self) -> Tensor<'t, T> {
        self.unary(|x| -x, |a| Op::Neg { a })
    }

    pub fn square(&self) -> Tensor<'t, T> {
        self.unary(|x| x * x, |a| Op::Square { a })
    }

    pub fn sqrt(&self) -> Tensor<'t, T> {
        self.unary_saving(|x| x.sqrt(), |a, out| Op::Sqrt { a, out })
    }

    pub fn exp(&self) -> Tensor<'t, T> {
        self.unary_saving(|x| x.exp(), |a, out| Op::Exp { a, out })
    }

    pub fn log(&self) -> Tensor<'t, T> {
        self.unary(|x| x.ln(), |a| Op::Log { a })
    }

    pub fn cosh(&self) -> Tensor<'t, T> {
        self.unary(|x| x.cosh(), |a| Op::Cosh { a })
    }

    pub fn sinh(&self) -> Tensor<'t, T> {
        self.unary(|x| x.sinh(), |a| Op::Sinh { a })
    }

    /// Numerically stable logistic function (never exponentiates a large
    /// positive argument, so it cannot overflow in f32 either).
    pub fn sigmoid(&self) -> Tensor<'t, T> {
        self.unary_saving(
            |x| {
                if x >= T::zero() {
                    T::one() / (T::one() + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (T::one() + e)
                }
            },
            |a, out| Op::Sigmoid { a, out },
        )
    }

    /// Inverse hyperbolic cosine. Values in `[1, 1+1e-12)` are nudged up to
    /// the clamp floor so the derivative stays finite; anything below 1 is a
    /// domain error — callers that may legitimately round below 1 clamp
    /// before calling.
    pub fn arcosh(&self) -> Result<Tensor<'t, T>> {
        let floor = T::one() + T::c(1e-12);
        let mut clamped = Vec::with_capacity(self.len());
        for &x in self.data.iter() {
            if x < T::one() {
                return Err(Error::domain(
                    "arcosh",
                    format!("input {x} below domain minimum 1"),
                ));
            }
            clamped.push(if x < floor { floor } else { x });
        }
        let clamped: Rc<[T]> = clamped.into();
        let data: Vec<T> = clamped.iter().map(|x| x.acosh()).collect();
        Ok(emit(
            self.tape,
            self.node.is_some(),
            self.shape.clone(),
            data.into(),
            || Op::Arcosh {
                a: Arg {
                    node: self.node,
                    data: clamped,
                },
            },
        ))
    }

    pub fn clamp_min(&self, min: T) -> Tensor<'t, T> {
        self.unary(|x| if x < min { min } else { x }, |a| Op::ClampMin { a, min })
    }

    pub fn sum(&self) -> Tensor<'t, T> {
        let total = self.data.iter().copied().fold(T::zero(), |acc, v| acc + v);
        emit(
            self.tape,
            self.node.is_some(),
            vec![1],
            vec![total].into(),
            || Op::Sum { a: Arg::of(self) },
        )
    }

    pub fn mean(&self) -> Tensor<'t, T> {
        assert!(!self.is_empty(), "mean of empty tensor");
        let total = self.data.iter().copied().fold(T::zero(), |acc, v| acc + v);
        let n = T::from_usize(self.len()).expect("len fits scalar");
        emit(
            self.tape,
            self.node.is_some(),
            vec![1],
            vec![total / n].into(),
            || Op::Mean { a: Arg::of(self) },
        )
    }

    /// Euclidean norm over all elements, as a one-element tensor.
    pub fn norm2(&self) -> Tensor<'t, T> {
        let mut acc = T::zero();
        for &x in self.data.iter() {
            acc += x * x;
        }
        let out = acc.sqrt();
        emit(
            self.tape,
            self.node.is_some(),
            vec![1],
            vec![out].into(),
            || Op::Norm2 {
                a: Arg::of(self),
                out,
            },
        )
    }

    /// Softmax over the last axis, shift-invariant by construction (the row
    /// maximum is subtracted before exponentiation).
    pub fn softmax(&self) -> Result<Tensor<'t, T>> {
        let Some(&width) = self.shape.last() else {
            return Err(Error::InvalidArgument("softmax needs rank ≥ 1".into()));
        };
        if width == 0 {
            return Err(Error::InvalidArgument("softmax over empty axis".into()));
        }
        let rows = self.len() / width;
        let mut data = vec![T::zero(); self.len()];
        for r in 0..rows {
            let row = &self.data[r * width..(r + 1) * width];
            let mut max = row[0];
            for &v in row {
                if v > max {
                    max = v;
                }
            }
            let mut denom = T::zero();
            for (o, &v) in data[r * width..(r + 1) * width].iter_mut().zip(row) {
                let e = (v - max).exp();
                *o = e;
                denom += e;
            }
            for o in &mut data[r * width..(r + 1) * width] {
                *o /= denom;
            }
        }
        let out: Rc<[T]> = data.into();
        Ok(emit(
            self.tape,
            self.node.is_some(),
            self.shape.clone(),
            Rc::clone(&out),
            || Op::Softmax {
                a: Arg::of(self),
                out,
                width,
            },
        ))
    }

    /// Concatenate along the last axis. All parts must agree on leading
    /// dimensions; a one-element `[1]` tensor concatenates with any vector.
    pub fn concat(parts: &[&Tensor<'t, T>]) -> Result<Tensor<'t, T>> {
        let Some(first) = parts.first() else {
            return Err(Error::InvalidArgument("concat of zero tensors".into()));
        };
        let rank = first.shape.len();
        if rank == 0 {
            return Err(Error::InvalidArgument("concat needs rank ≥ 1".into()));
        }
        let lead = &first.shape[..rank - 1];
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            if p.shape.len() != rank || &p.shape[..rank - 1] != lead {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: first.shape.clone(),
                    rhs: p.shape.clone(),
                });
            }
            widths.push(p.shape[rank - 1]);
        }
        let total: usize = widths.iter().sum();
        let rows: usize = lead.iter().product();
        let mut data = vec![T::zero(); rows * total];
        let mut offset = 0;
        for (p, &w) in parts.iter().zip(&widths) {
            for r in 0..rows {
                data[r * total + offset..r * total + offset + w]
                    .copy_from_slice(&p.data[r * w..(r + 1) * w]);
            }
            offset += w;
        }
        let mut shape = lead.to_vec();
        shape.push(total);

        let mut tape = None;
        for p in parts {
            if let Some(tp) = p.tape {
                if let Some(prev) = tape {
                    assert!(
                        std::ptr::eq(prev as *const Tape<T>, tp as *const Tape<T>),
                        "tensors belong to different tapes"
                    );
                }
                tape = Some(tp);
            }
        }
        let participates = parts.iter().any(|p| p.node.is_some());
        Ok(emit(tape, participates, shape, data.into(), || Op::Concat {
            parts: parts.iter().map(|p| Arg::of(p)).collect(),
            widths,
            rows,
        }))
    }

    /// Contiguous window `[start, end)` of the last axis.
    pub fn slice_last(&self, start: usize, end: usize) -> Result<Tensor<'t, T>> {
        let Some(&last) = self.shape.last() else {
            return Err(Error::InvalidArgument("slice needs rank ≥ 1".into()));
        };
        if start >= end || end > last {
            return Err(Error::InvalidArgument(format!(
                "slice [{start}, {end}) out of bounds for last axis of {last}"
            )));
        }
        let width = end - start;
        let rows = self.len() / last;
        let mut data = Vec::with_capacity(rows * width);
        for r in 0..rows {
            data.extend_from_slice(&self.data[r * last + start..r * last + end]);
        }
        let mut shape = self.shape[..self.shape.len() - 1].to_vec();
        shape.push(width);
        Ok(emit(
            self.tape,
            self.node.is_some(),
            shape,
            data.into(),
            || Op::SliceLast {
                a: Arg::of(self),
                start,
                width,
                last,
            },
        ))
    }

    /// One row of a 2-D tensor — the embedding-lookup slice. Backward
    /// scatters the gradient into that row of the table.
    pub fn row(&self, index: usize) -> Result<Tensor<'t, T>> {
        let [rows, width] = self.shape.as_slice() else {
            return Err(Error::InvalidArgument(format!(
                "row() needs a 2-D tensor, got shape {:?}",
                self.shape
            )));
        };
        let (rows, width) = (*rows, *width);
        if index >= rows {
            return Err(Error::InvalidArgument(format!(
                "row {index} out of bounds for {rows} rows"
            )));
        }
        let data = self.data[index * width..(index + 1) * width].to_vec();
        Ok(emit(
            self.tape,
            self.node.is_some(),
            vec![width],
            data.into(),
            || Op::Row {
                a: Arg::of(self),
                index,
                width,
            },
        ))
    }

    /// Inverted dropout: with probability `p` an element is zeroed, and the
    /// survivors are scaled by 1/(1−p) so the expectation is unchanged.
    /// `p = 0` is the identity and records nothing.
    pub fn dropout(&self, p: f64, rng: &mut impl Rng) -> Result<Tensor<'t, T>> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate {p} outside [0, 1)"
            )));
        }
        if p == 0.0 {
            return Ok(self.clone());
        }
        let scale = T::c(1.0 / (1.0 - p));
        let mask: Rc<[T]> = self
            .data
            .iter()
            .map(|_| if rng.gen::<f64>() < p { T::zero() } else { scale })
            .collect::<Vec<T>>()
            .into();
        let data: Vec<T> = self
            .data
            .iter()
            .zip(mask.iter())
            .map(|(x, m)| *x * *m)
            .collect();
        Ok(emit(
            self.tape,
            self.node.is_some(),
            self.shape.clone(),
            data.into(),
            || Op::Dropout {
                a: Arg::of(self),
                mask,
            },
        ))
    }
}
