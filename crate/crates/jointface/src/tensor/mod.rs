//! Dense n-dimensional tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is a cheap handle (reference-counted) onto a flat `f64`
//! buffer plus shape metadata and an optional gradient buffer. Operations
//! that touch at least one gradient-tracking tensor record a backward
//! closure on a thread-local tape; [`Tensor::backward`] replays the tape in
//! exact reverse recording order and accumulates gradients into every
//! tensor that requires them.

mod ops;
pub mod gradcheck;
pub mod tape;

use std::cell::{Ref, RefCell};
use std::fmt;
use std::rc::Rc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub use gradcheck::{gradcheck, gradcheck_param, GradReport};

struct Inner {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
}

/// Handle to a shared tensor value. Cloning is cheap and aliases the
/// same storage; gradients accumulate across aliases.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<RefCell<Inner>>,
}

impl Tensor {
    pub fn from_vec(data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::ShapeMismatch {
                op: "from_vec",
                expected: vec![numel],
                got: vec![data.len()],
            });
        }
        Ok(Tensor::raw(data, shape.to_vec(), false))
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        let numel: usize = shape.iter().product();
        Tensor::raw(vec![0.0; numel], shape.to_vec(), false)
    }

    pub fn full(shape: &[usize], value: f64) -> Tensor {
        let numel: usize = shape.iter().product();
        Tensor::raw(vec![value; numel], shape.to_vec(), false)
    }

    pub fn scalar(value: f64) -> Tensor {
        Tensor::raw(vec![value], vec![1], false)
    }

    /// Gaussian-initialized tensor with the given standard deviation.
    pub fn randn(shape: &[usize], std: f64, rng: &mut impl Rng) -> Tensor {
        let numel: usize = shape.iter().product();
        let data = (0..numel)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                z * std
            })
            .collect();
        Tensor::raw(data, shape.to_vec(), false)
    }

    /// Marks this tensor as a gradient-tracking leaf and returns it.
    pub fn with_grad(self) -> Tensor {
        self.inner.borrow_mut().requires_grad = true;
        self
    }

    pub(crate) fn raw(data: Vec<f64>, shape: Vec<usize>, requires_grad: bool) -> Tensor {
        Tensor {
            inner: Rc::new(RefCell::new(Inner {
                shape,
                data,
                grad: None,
                requires_grad,
            })),
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().shape.clone()
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.inner.borrow().shape[axis]
    }

    pub fn ndim(&self) -> usize {
        self.inner.borrow().shape.len()
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn data(&self) -> Ref<'_, [f64]> {
        Ref::map(self.inner.borrow(), |i| i.data.as_slice())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.inner.borrow().data.clone()
    }

    /// Value of a single-element tensor. Panics on anything larger; use it
    /// only on losses and other reductions.
    pub fn item(&self) -> f64 {
        let inner = self.inner.borrow();
        assert!(
            inner.data.len() == 1,
            "item() on tensor with {} elements",
            inner.data.len()
        );
        inner.data[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.borrow().requires_grad
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.borrow().grad.clone()
    }

    pub fn clear_grad(&self) {
        self.inner.borrow_mut().grad = None;
    }

    /// Overwrites the value in place. Intended for leaves (parameters,
    /// finite-difference probes); does not touch the tape.
    pub fn set_data(&self, data: &[f64]) {
        let mut inner = self.inner.borrow_mut();
        assert_eq!(inner.data.len(), data.len(), "set_data length mismatch");
        inner.data.copy_from_slice(data);
    }

    /// In-place mutation of the value buffer (optimizer updates).
    pub fn map_data(&self, f: impl FnOnce(&mut [f64])) {
        f(&mut self.inner.borrow_mut().data);
    }

    pub(crate) fn accum_grad(&self, delta: &[f64]) {
        let mut inner = self.inner.borrow_mut();
        if !inner.requires_grad {
            return;
        }
        let n = inner.data.len();
        debug_assert_eq!(n, delta.len());
        let grad = inner.grad.get_or_insert_with(|| vec![0.0; n]);
        for (g, d) in grad.iter_mut().zip(delta) {
            *g += d;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.inner.borrow().data.iter().all(|v| v.is_finite())
    }

    /// Reverse-mode differentiation from a scalar loss. Populates `grad`
    /// on every gradient-tracking tensor reachable from the loss and
    /// clears the tape.
    pub fn backward(&self) -> Result<()> {
        if self.len() != 1 {
            return Err(Error::NotScalar {
                elements: self.len(),
            });
        }
        if !self.requires_grad() {
            // Constant loss: nothing to propagate.
            tape::clear();
            return Ok(());
        }
        self.inner.borrow_mut().grad = Some(vec![1.0]);
        let entries = tape::take();
        for entry in entries.iter().rev() {
            let grad_out = entry.output.grad();
            if let Some(go) = grad_out {
                (entry.backward)(&go);
            }
        }
        Ok(())
    }

    pub(crate) fn ptr_eq(&self, other: &Tensor) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let inner = self.inner.borrow();
        let head: Vec<f64> = inner.data.iter().take(8).copied().collect();
        write!(
            f,
            "Tensor(shape={:?}, requires_grad={}, data={:?}{})",
            inner.shape,
            inner.requires_grad,
            head,
            if inner.data.len() > 8 { ", ..." } else { "" }
        )
    }
}

/// Records an op result on the tape. `backward` receives the output
/// gradient and must accumulate into the captured inputs.
pub(crate) fn from_op(
    op: &'static str,
    inputs: &[&Tensor],
    data: Vec<f64>,
    shape: Vec<usize>,
    backward: impl Fn(&[f64]) + 'static,
) -> Result<Tensor> {
    if tape::strict_enabled() {
        for input in inputs {
            if !input.all_finite() {
                return Err(Error::NonFiniteInput { op });
            }
        }
    }
    let requires = tape::grad_enabled() && inputs.iter().any(|t| t.requires_grad());
    let out = Tensor::raw(data, shape, requires);
    if requires {
        tape::record(out.clone(), Box::new(backward));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn from_vec_checks_length() {
        let err = Tensor::from_vec(vec![1.0, 2.0, 3.0], &[2, 2]).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
    }

    #[test]
    fn add_elementwise() {
        let a = Tensor::from_vec(vec![1.0, 2.0], &[2]).unwrap();
        let b = Tensor::from_vec(vec![3.0, 4.0], &[2]).unwrap();
        let c = a.add(&b).unwrap();
        assert_eq!(c.to_vec(), vec![4.0, 6.0]);
    }

    #[test]
    fn matmul_identity() {
        let eye = Tensor::from_vec(vec![1.0, 0.0, 0.0, 1.0], &[2, 2]).unwrap();
        let x = Tensor::from_vec(vec![5.0, -1.0, 2.0, 7.0], &[2, 2]).unwrap();
        let y = eye.matmul(&x).unwrap();
        assert_eq!(y.to_vec(), x.to_vec());
    }

    #[test]
    fn matmul_hand_oracle() {
        // dot products: [1,2]·[5,6] = 17, [3,4]·[5,6] = 39
        let a = Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
        let b = Tensor::from_vec(vec![5.0, 6.0], &[2, 1]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), vec![2, 1]);
        assert_eq!(c.to_vec(), vec![17.0, 39.0]);
    }

    #[test]
    fn matmul_shape_mismatch_names_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 2]);
        let err = a.matmul(&b).unwrap_err();
        match err {
            Error::ShapeMismatch { expected, got, .. } => {
                assert_eq!(expected, vec![2, 3]);
                assert_eq!(got, vec![2, 2]);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn backward_of_sum_is_ones() {
        let x = Tensor::from_vec(vec![1.0, -2.0, 0.5, 9.0], &[2, 2])
            .unwrap()
            .with_grad();
        let loss = x.sum().unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0; 4]);
        assert_eq!(tape::len(), 0, "tape must be cleared by backward");
    }

    #[test]
    fn backward_of_half_square() {
        // loss = 0.5·sum(x²), x = [3] → grad = x = [3]
        let x = Tensor::from_vec(vec![3.0], &[1]).unwrap().with_grad();
        let loss = x.mul(&x).unwrap().sum().unwrap().scale(0.5).unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![3.0]);
    }

    #[test]
    fn backward_on_constant_loss_is_noop() {
        let c = Tensor::scalar(4.2);
        c.backward().unwrap();
        assert!(c.grad().is_none());
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let x = Tensor::zeros(&[3]).with_grad();
        let y = x.relu().unwrap();
        let err = y.backward().unwrap_err();
        assert!(matches!(err, Error::NotScalar { elements: 3 }));
        tape::clear();
    }

    #[test]
    fn backward_is_linear_in_the_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::randn(&[6], 1.0, &mut rng).with_grad();

        let f = |x: &Tensor| x.mul(x).unwrap().sum().unwrap();
        let g = |x: &Tensor| x.relu().unwrap().sum().unwrap().scale(3.0).unwrap();

        f(&x).add(&g(&x)).unwrap().backward().unwrap();
        let combined = x.grad().unwrap();

        x.clear_grad();
        f(&x).backward().unwrap();
        let gf = x.grad().unwrap();
        x.clear_grad();
        g(&x).backward().unwrap();
        let gg = x.grad().unwrap();

        for i in 0..combined.len() {
            assert!((combined[i] - (gf[i] + gg[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = Tensor::randn(&[4, 4], 1.0, &mut rng);
        let b = Tensor::randn(&[4, 4], 1.0, &mut rng);
        let r1 = a.matmul(&b).unwrap().to_vec();
        let r2 = a.matmul(&b).unwrap().to_vec();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&r1), bits(&r2));
    }

    #[test]
    fn strict_mode_rejects_non_finite() {
        let a = Tensor::from_vec(vec![1.0, f64::NAN], &[2]).unwrap();
        let b = Tensor::from_vec(vec![1.0, 1.0], &[2]).unwrap();
        tape::set_strict(true);
        let err = a.add(&b).unwrap_err();
        tape::set_strict(false);
        assert!(matches!(err, Error::NonFiniteInput { op: "add" }));
        // Off by default: the same op goes through.
        assert!(a.add(&b).is_ok());
    }

    #[test]
    fn no_grad_suppresses_recording() {
        let x = Tensor::from_vec(vec![2.0], &[1]).unwrap().with_grad();
        let y = tape::no_grad(|| x.mul(&x).unwrap());
        assert!(!y.requires_grad());
        assert_eq!(tape::len(), 0);
    }
}
