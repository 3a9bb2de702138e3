//! Minimal reverse-mode automatic differentiation over dense tensors.
//!
//! Every operation on a [`Tensor`] records the parents it was computed
//! from together with an [`Op`](ops) tag. Calling [`Tensor::backward`] on a
//! scalar walks the recorded graph in reverse creation order and
//! accumulates gradients into every leaf created with
//! [`Tensor::parameter`].
//!
//! The engine is generic over [`Scalar`] so the same model code runs in
//! single precision for training and in double precision for gradient
//! checks.
//!
//! ```
//! use rir_neural::Tensor;
//!
//! let w = Tensor::<f64>::parameter(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
//! let x = Tensor::new(vec![3], vec![4.0, 5.0, 6.0]).unwrap();
//! let loss = w.mul(&x).unwrap().sum();
//! loss.backward().unwrap();
//! assert_eq!(w.grad().unwrap(), vec![4.0, 5.0, 6.0]);
//! ```

mod conv;
mod error;
mod ops;
mod optim;
mod scalar;
mod tensor;

pub mod gradcheck;

pub use error::{NeuralError, Result};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use scalar::Scalar;
pub use tensor::{Parameter, Tensor};
