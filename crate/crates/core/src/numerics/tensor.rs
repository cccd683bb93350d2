use std::cell::{Cell, Ref, RefCell};
use std::collections::HashSet;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::numerics::rng::SeedRng;
use crate::numerics::scalar::Real;

thread_local! {
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
    static NO_GRAD_DEPTH: Cell<u32> = const { Cell::new(0) };
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

/// Run `f` without recording anything on the tape. Used by inference and
/// generation, where gradients are never needed.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    NO_GRAD_DEPTH.with(|d| d.set(d.get() + 1));
    let out = f();
    NO_GRAD_DEPTH.with(|d| d.set(d.get() - 1));
    out
}

fn recording() -> bool {
    NO_GRAD_DEPTH.with(|d| d.get()) == 0
}

type BackFn<T> = Box<dyn Fn(&[T])>;

pub(crate) struct Inner<T: Real> {
    id: u64,
    shape: Vec<usize>,
    data: RefCell<Vec<T>>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<T>>>,
    parents: Vec<Tensor<T>>,
    back: Option<BackFn<T>>,
}

/// Dense row-major tensor. Cloning is cheap (shared handle); values are
/// treated as immutable once produced — only leaf parameters are mutated,
/// and only between passes (optimizer step, checkpoint load).
pub struct Tensor<T: Real> {
    inner: Rc<Inner<T>>,
}

impl<T: Real> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor { inner: Rc::clone(&self.inner) }
    }
}

impl<T: Real> std::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad)
            .finish()
    }
}

impl<T: Real> Tensor<T> {
    pub fn from_vec(shape: Vec<usize>, data: Vec<T>) -> Self {
        assert_eq!(
            data.len(),
            shape.iter().product::<usize>(),
            "data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        Tensor {
            inner: Rc::new(Inner {
                id: next_id(),
                shape,
                data: RefCell::new(data),
                requires_grad: false,
                grad: RefCell::new(None),
                parents: Vec::new(),
                back: None,
            }),
        }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor::from_vec(shape, vec![T::zero(); n])
    }

    pub fn scalar(x: T) -> Self {
        Tensor::from_vec(vec![], vec![x])
    }

    pub fn from_f64s(shape: Vec<usize>, data: &[f64]) -> Self {
        Tensor::from_vec(shape, data.iter().map(|&x| T::lit(x)).collect())
    }

    /// Uniform init in `[-scale, scale]`.
    pub fn rand_uniform(shape: Vec<usize>, scale: f64, rng: &mut SeedRng) -> Self {
        let n = shape.iter().product();
        let data = (0..n).map(|_| T::lit(rng.uniform(-scale, scale))).collect();
        Tensor::from_vec(shape, data)
    }

    /// Mark as a trainable leaf.
    pub fn requires_grad(self) -> Self {
        assert!(self.inner.back.is_none(), "only leaves can require grad");
        Tensor {
            inner: Rc::new(Inner {
                id: next_id(),
                shape: self.inner.shape.clone(),
                data: RefCell::new(self.inner.data.borrow().clone()),
                requires_grad: true,
                grad: RefCell::new(None),
                parents: Vec::new(),
                back: None,
            }),
        }
    }

    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<T>,
        parents: Vec<Tensor<T>>,
        back: impl Fn(&[T]) + 'static,
    ) -> Self {
        let tracked = recording() && parents.iter().any(|p| p.is_tracked());
        if !tracked {
            return Tensor::from_vec(shape, data);
        }
        assert_eq!(data.len(), shape.iter().product::<usize>());
        Tensor {
            inner: Rc::new(Inner {
                id: next_id(),
                shape,
                data: RefCell::new(data),
                requires_grad: false,
                grad: RefCell::new(None),
                parents,
                back: Some(Box::new(back)),
            }),
        }
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn len(&self) -> usize {
        self.inner.data.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rows(&self) -> usize {
        self.inner.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.inner.shape[1]
    }

    pub fn is_scalar(&self) -> bool {
        self.len() == 1 && self.inner.shape.len() <= 1
    }

    pub fn data(&self) -> Ref<'_, Vec<T>> {
        self.inner.data.borrow()
    }

    pub fn item(&self) -> T {
        assert!(self.is_scalar(), "item() on non-scalar tensor");
        self.inner.data.borrow()[0]
    }

    pub fn to_f64s(&self) -> Vec<f64> {
        self.inner.data.borrow().iter().map(|x| x.as_f64()).collect()
    }

    /// Overwrite leaf data in place (optimizer step, checkpoint load).
    pub fn set_data(&self, new: &[T]) {
        let mut d = self.inner.data.borrow_mut();
        assert_eq!(d.len(), new.len(), "set_data length mismatch");
        d.copy_from_slice(new);
    }

    pub fn is_leaf_param(&self) -> bool {
        self.inner.requires_grad
    }

    pub(crate) fn is_tracked(&self) -> bool {
        self.inner.requires_grad || self.inner.back.is_some()
    }

    pub fn grad(&self) -> Option<Vec<T>> {
        self.inner.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    /// Add `delta` into the gradient buffer, allocating zeros on first touch.
    pub(crate) fn accum_grad(&self, delta: &[T]) {
        let mut g = self.inner.grad.borrow_mut();
        match g.as_mut() {
            Some(buf) => {
                for (a, b) in buf.iter_mut().zip(delta) {
                    *a += *b;
                }
            }
            None => *g = Some(delta.to_vec()),
        }
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.inner.data.borrow().iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!("non-finite value in {what}")));
        }
        if let Some(g) = self.inner.grad.borrow().as_ref() {
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numerical(format!("non-finite gradient in {what}")));
            }
        }
        Ok(())
    }
}

/// Topologically ordered record of the operations reachable from a root.
/// Replaying it in reverse visits each node exactly once.
pub struct Tape<T: Real> {
    order: Vec<Tensor<T>>,
}

impl<T: Real> Tape<T> {
    pub fn record(root: &Tensor<T>) -> Self {
        let mut order = Vec::new();
        let mut seen: HashSet<u64> = HashSet::new();
        // iterative post-order DFS over tracked nodes
        let mut stack: Vec<(Tensor<T>, usize)> = vec![(root.clone(), 0)];
        seen.insert(root.id());
        while let Some((node, child)) = stack.pop() {
            if child < node.inner.parents.len() {
                stack.push((node.clone(), child + 1));
                let parent = node.inner.parents[child].clone();
                if parent.is_tracked() && seen.insert(parent.id()) {
                    stack.push((parent, 0));
                }
            } else {
                order.push(node);
            }
        }
        Tape { order }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    fn backprop(&self) {
        for node in self.order.iter().rev() {
            if let Some(back) = node.inner.back.as_ref() {
                let grad = node.inner.grad.borrow();
                if let Some(g) = grad.as_ref() {
                    back(g);
                }
            }
        }
    }
}

/// Reverse-mode sweep from a scalar root. Gradients accumulate; call
/// `zero_grad` on parameters between steps.
pub fn backward<T: Real>(root: &Tensor<T>) -> Result<()> {
    if !root.is_scalar() {
        return Err(Error::Contract(format!(
            "backward root must be scalar, got shape {:?}",
            root.shape()
        )));
    }
    let tape = Tape::record(root);
    // leaf grads accumulate across calls; intermediate grads are per-sweep
    for node in &tape.order {
        if node.inner.back.is_some() {
            node.zero_grad();
        }
    }
    root.accum_grad(&[T::one()]);
    tape.backprop();
    Ok(())
}
