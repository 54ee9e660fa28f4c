//! Named, typed model parameters and the per-step context that binds them to
//! a tape.
//!
//! A [`Param`] owns its values between steps. During a step, [`StepCtx::param`]
//! binds it onto the active tape exactly once — repeated lookups return the
//! same leaf, so gradients from multiple uses accumulate into one slot. In
//! evaluation mode the binding is a constant instead and the tape stays empty,
//! which keeps inference paths allocation-light.

use std::cell::{RefCell, RefMut};
use std::collections::HashMap;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;
use crate::tensor::{Tape, Tensor};
use crate::Result;

/// Process-unique parameter identity. Names are for humans and checkpoints;
/// ids key the per-step binding table.
pub type ParamId = u64;

static NEXT_PARAM_ID: AtomicU64 = AtomicU64::new(1);

/// How the optimizer should treat the values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Ordinary flat values (weights, biases, gains).
    Euclidean,
    /// Rows are the spatial part of manifold points; the time coordinate is
    /// recomputed on the tape wherever the point is used.
    LorentzSpatial,
    /// Rows are full (time + spatial) manifold points, updated along
    /// geodesics when the Riemannian optimizer is enabled.
    LorentzFull,
}

/// Projection applied to the raw values after every optimizer update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Constraint {
    None,
    /// Rescale any row whose Euclidean norm exceeds the bound.
    MaxRowNorm(f64),
    /// Clamp every value to at least the bound (e.g. positive gains).
    MinValue(f64),
}

#[derive(Debug, Clone)]
pub struct Param<T> {
    id: ParamId,
    name: String,
    shape: Vec<usize>,
    data: Vec<T>,
    kind: ParamKind,
    constraint: Constraint,
}

impl<T: Scalar> Param<T> {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<T>, kind: ParamKind) -> Self {
        let numel: usize = shape.iter().product();
        assert_eq!(
            numel,
            data.len(),
            "parameter data length must match its shape"
        );
        Param {
            id: NEXT_PARAM_ID.fetch_add(1, Ordering::Relaxed),
            name: name.into(),
            shape,
            data,
            kind,
            constraint: Constraint::None,
        }
    }

    pub fn with_constraint(mut self, constraint: Constraint) -> Self {
        self.constraint = constraint;
        self
    }

    pub fn id(&self) -> ParamId {
        self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn kind(&self) -> ParamKind {
        self.kind
    }

    pub fn constraint(&self) -> Constraint {
        self.constraint
    }

    pub fn values(&self) -> &[T] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn set_values(&mut self, data: Vec<T>) {
        assert_eq!(data.len(), self.data.len(), "parameter size is fixed");
        self.data = data;
    }

    /// Length of one row: the trailing dimensions, or the whole vector for
    /// rank-1 parameters.
    pub fn row_len(&self) -> usize {
        if self.shape.len() <= 1 {
            self.data.len()
        } else {
            self.shape[1..].iter().product()
        }
    }

    /// Enforce this parameter's constraint in place.
    pub fn apply_constraint(&mut self) {
        match self.constraint {
            Constraint::None => {}
            Constraint::MinValue(min) => {
                let min = T::c(min);
                for v in &mut self.data {
                    if *v < min {
                        *v = min;
                    }
                }
            }
            Constraint::MaxRowNorm(max) => {
                let max = T::c(max);
                let row = self.row_len().max(1);
                for chunk in self.data.chunks_mut(row) {
                    let mut sq = T::zero();
                    for &v in chunk.iter() {
                        sq += v * v;
                    }
                    let norm = sq.sqrt();
                    if norm > max {
                        let scale = max / norm;
                        for v in chunk {
                            *v *= scale;
                        }
                    }
                }
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

// ── step context ────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Everything a forward pass needs besides the inputs: the tape, the mode,
/// a deterministic RNG for dropout and sampling, and the parameter bindings.
pub struct StepCtx<'t, T: Scalar> {
    tape: &'t Tape<T>,
    mode: Mode,
    rng: RefCell<ChaCha8Rng>,
    bindings: RefCell<HashMap<ParamId, Tensor<'t, T>>>,
    overrides: HashMap<ParamId, Rc<[T]>>,
}

impl<'t, T: Scalar> StepCtx<'t, T> {
    pub fn train(tape: &'t Tape<T>, seed: u64) -> Self {
        StepCtx {
            tape,
            mode: Mode::Train,
            rng: RefCell::new(ChaCha8Rng::seed_from_u64(seed)),
            bindings: RefCell::new(HashMap::new()),
            overrides: HashMap::new(),
        }
    }

    pub fn eval(tape: &'t Tape<T>) -> Self {
        StepCtx {
            tape,
            mode: Mode::Eval,
            rng: RefCell::new(ChaCha8Rng::seed_from_u64(0)),
            bindings: RefCell::new(HashMap::new()),
            overrides: HashMap::new(),
        }
    }

    /// Replace one parameter's values for this step without mutating the
    /// parameter itself — the hook the finite-difference checks use.
    pub fn with_value_override(mut self, param: &Param<T>, data: Vec<T>) -> Self {
        assert_eq!(data.len(), param.numel(), "override must match parameter size");
        self.overrides.insert(param.id(), Rc::from(data));
        self
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn is_train(&self) -> bool {
        self.mode == Mode::Train
    }

    pub fn rng(&self) -> RefMut<'_, ChaCha8Rng> {
        self.rng.borrow_mut()
    }

    /// Bind a parameter onto the tape (once) and return its tensor. Training
    /// mode records a gradient leaf; evaluation mode returns a constant and
    /// leaves the tape untouched.
    pub fn param(&self, p: &Param<T>) -> Tensor<'t, T> {
        if let Some(t) = self.bindings.borrow().get(&p.id()) {
            return t.clone();
        }
        let data: Rc<[T]> = match self.overrides.get(&p.id()) {
            Some(d) => d.clone(),
            None => Rc::from(p.values()),
        };
        let tensor = match self.mode {
            Mode::Train => self.tape.leaf_shared(p.shape(), data),
            Mode::Eval => Tensor::from_shared(p.shape(), data),
        };
        self.bindings
            .borrow_mut()
            .insert(p.id(), tensor.clone());
        tensor
    }

    /// The tensor a parameter was bound to this step, if it was used.
    pub fn binding(&self, p: &Param<T>) -> Option<Tensor<'t, T>> {
        self.bindings.borrow().get(&p.id()).cloned()
    }

    /// Pre-bind a parameter to an existing tensor, so the next `param` call
    /// returns it instead of creating a leaf. Gradient checks use this to
    /// route a layer parameter through an externally owned leaf.
    pub fn bind_tensor(&self, p: &Param<T>, t: Tensor<'t, T>) {
        assert_eq!(t.len(), p.numel(), "bound tensor must match parameter size");
        self.bindings.borrow_mut().insert(p.id(), t);
    }

    /// Inverted dropout driven by the context RNG; identity in eval mode.
    pub fn dropout(&self, x: &Tensor<'t, T>, p: f64) -> Result<Tensor<'t, T>> {
        if !self.is_train() || p == 0.0 {
            return Ok(x.clone());
        }
        x.dropout(p, &mut *self.rng.borrow_mut())
    }
}
