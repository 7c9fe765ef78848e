//! Dense tensor arithmetic and reverse-mode differentiation for the
//! operator set used by the model zoo. Gradients are available with
//! respect to parameters and the input alike.

pub mod kernels;
mod tape;
mod tensor;

pub use tape::{Gradients, Tape, VarId};
pub use tensor::{Scalar, Tensor, TensorOf};
