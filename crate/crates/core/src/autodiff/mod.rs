//! Minimal reverse-mode automatic differentiation over dense tensors.

mod gradcheck;
mod tape;

pub use gradcheck::{finite_diff_check, GRAD_FLOOR};
pub use tape::{gelu, BackwardRule, Gradients, ParamId, Tape, Var};
