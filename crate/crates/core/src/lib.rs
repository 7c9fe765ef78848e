//! Input-space sharpness measurement for small image classifiers.

pub mod augment;
pub mod autodiff;
pub mod data;
pub mod error;
pub mod model;

pub use autodiff::{Gradients, Scalar, Tape, Tensor, TensorOf, VarId};
pub use error::{Error, Result};
