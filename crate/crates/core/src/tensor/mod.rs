//! Dense `f64` tensors and a tape-based reverse-mode differentiator.

mod complex;
pub(crate) mod gemm;
pub mod gradcheck;
mod ops;
mod shape;
mod tape;
mod value;

pub use complex::ComplexVar;
pub use ops::{sigmoid, BinaryOp, UnaryOp};
pub use shape::Shape;
pub use tape::{Backward, BackwardCtx, Gradients, Tape, Var};
pub use value::Tensor;
