//! Hand-differentiated layers, optimizers and verification helpers.
//!
//! Activations are plain row-major `Vec<f64>` buffers with explicit batch
//! sizes; trainable state lives in [`Param`]s. Every layer exposes a
//! `forward` that returns what its `backward` needs, and `backward`
//! accumulates into the parameter gradients.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod lstm;
pub mod optim;

pub use checkpoint::Checkpoint;
pub use gradcheck::{grad_check, GradCheck, GradEntry, Resolved};
pub use layers::{dropout, mse_loss, relu, relu_backward, Conv1d, Dense};
pub use lstm::{Lstm, LstmCache};
pub use optim::{EarlyStopper, PlateauScheduler, RmsProp, StopSignal};

use crate::error::{Result, RulError};
use crate::rng::StreamRng;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            values: vec![0.0; shape.iter().product()],
            grad: None,
        }
    }

    pub fn from_vec(shape: &[usize], values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.iter().product::<usize>() {
            return Err(RulError::structure(format!(
                "{} values for shape {shape:?}",
                values.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            values,
            grad: None,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A named trainable tensor. `decay` marks weights that receive weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub decay: bool,
    pub tensor: Tensor,
}

impl Param {
    pub fn zeros(name: &str, shape: &[usize], decay: bool) -> Self {
        let mut tensor = Tensor::zeros(shape);
        tensor.grad = Some(vec![0.0; tensor.len()]);
        Self {
            name: name.to_string(),
            decay,
            tensor,
        }
    }

    /// Uniform in `[-bound, bound)` from `rng`.
    pub fn uniform(name: &str, shape: &[usize], bound: f64, decay: bool, rng: &mut StreamRng) -> Self {
        let mut p = Self::zeros(name, shape, decay);
        p.tensor.values.iter_mut().for_each(|v| *v = rng.symmetric(bound));
        p
    }

    pub fn value(&self) -> &[f64] {
        &self.tensor.values
    }

    pub fn value_mut(&mut self) -> &mut [f64] {
        &mut self.tensor.values
    }

    pub fn grad(&self) -> &[f64] {
        self.tensor.grad.as_deref().expect("parameter gradient allocated")
    }

    pub fn grad_mut(&mut self) -> &mut [f64] {
        self.tensor.grad.as_deref_mut().expect("parameter gradient allocated")
    }

    pub fn shape(&self) -> &[usize] {
        &self.tensor.shape
    }

    pub fn zero_grad(&mut self) {
        self.grad_mut().fill(0.0);
    }
}

/// Anything that owns trainable parameters, in a fixed order.
pub trait HasParams {
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.tensor.len()).sum()
    }

    fn snapshot(&self) -> Vec<Vec<f64>> {
        self.params().iter().map(|p| p.value().to_vec()).collect()
    }

    fn restore(&mut self, snap: &[Vec<f64>]) {
        for (p, s) in self.params_mut().into_iter().zip(snap) {
            p.value_mut().copy_from_slice(s);
        }
    }
}

/// Strided matrix view for [`gemm`]: element `(i, j)` is at `i * rs + j * cs`.
#[derive(Clone, Copy)]
pub(crate) struct View<'a> {
    pub data: &'a [f64],
    pub rs: usize,
    pub cs: usize,
}

impl<'a> View<'a> {
    pub fn rows(data: &'a [f64], cols: usize) -> Self {
        Self { data, rs: cols, cs: 1 }
    }

    /// Transpose of a row-major matrix with `cols` columns.
    pub fn trans(data: &'a [f64], cols: usize) -> Self {
        Self { data, rs: 1, cs: cols }
    }
}

/// `C[m, n] = beta * C + A[m, k] · B[k, n]`, C row-major with `n` columns.
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: View<'_>, b: View<'_>, beta: f64, c: &mut [f64]) {
    if m == 0 || n == 0 {
        return;
    }
    let need = |v: &View<'_>, r: usize, cl: usize| {
        if r == 0 || cl == 0 {
            0
        } else {
            (r - 1) * v.rs + (cl - 1) * v.cs + 1
        }
    };
    assert!(a.data.len() >= need(&a, m, k) && b.data.len() >= need(&b, k, n));
    assert!(c.len() >= m * n);
    // SAFETY: bounds checked above for every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.data.as_ptr(), a.rs as isize, a.cs as isize,
            b.data.as_ptr(), b.rs as isize, b.cs as isize,
            beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}
