//! Reverse-mode automatic differentiation on a flat tape.
//!
//! A forward pass appends nodes to a [`Tape`]; each node stores its value and
//! the op that produced it. `backward` walks the tape once in reverse and
//! accumulates gradients in a fixed order, so the same program yields
//! bit-identical gradients every run.

mod adam;
mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use adam::AdamState;
pub use gradcheck::{grad_check_fn, grad_check_op, grad_check_suite, max_rel_error, CheckedOp, TOLERANCE};
pub use params::{ParamId, ParamSet};
pub use tape::{Gradients, Tape, TensorId};
pub use tensor::{matmul_raw, Tensor};
