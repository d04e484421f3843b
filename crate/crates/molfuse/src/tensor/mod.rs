//! Dense f64 tensors with reverse-mode gradients.
//!
//! `Tensor` is a plain value type; differentiable computation goes through
//! [`graph::Graph`], a tape that records one closure per op and replays them
//! in reverse. Parameters live in a [`optim::ParamStore`] and re-enter a
//! graph as cached leaf nodes, so one parameter used in several places
//! accumulates one gradient.

pub mod gradcheck;
pub mod graph;
pub mod optim;

pub use gradcheck::grad_check;
pub use graph::{Graph, Var};
pub use optim::{adam_step, AdamState, ParamId, ParamStore, Parameter, TensorError};

/// Dense row-major tensor. Everything in this crate is effectively 2-D;
/// vectors are [1, d] and scalars [1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    /// Gradient slot, populated on parameters after a backward pass.
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape mismatch: {:?} cannot hold {} elements",
            shape,
            data.len()
        );
        Tensor {
            shape,
            data,
            grad: None,
        }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; len],
            grad: None,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::new(vec![1, 1], vec![v])
    }

    pub fn row(values: Vec<f64>) -> Self {
        Tensor::new(vec![1, values.len()], values)
    }

    pub fn column(values: Vec<f64>) -> Self {
        Tensor::new(vec![values.len(), 1], values)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        assert_eq!(self.shape.len(), 2, "expected a 2-D tensor");
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        assert_eq!(self.shape.len(), 2, "expected a 2-D tensor");
        self.shape[1]
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.shape[1] + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.shape[1] + c]
    }

    pub fn item(&self) -> f64 {
        assert_eq!(self.len(), 1, "item() on a non-scalar tensor");
        self.data[0]
    }

    pub fn fill_with(mut self, mut f: impl FnMut() -> f64) -> Self {
        for x in self.data.iter_mut() {
            *x = f();
        }
        self
    }
}
