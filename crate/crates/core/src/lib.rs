//! Group-relative policy optimisation for tiny encoder-decoder translation
//! policies, with a reference-free reward stack, MT metrics and statistics,
//! synthetic tasks and an experiment harness.

pub mod autodiff;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod grpo;
pub mod harness;
pub mod metrics;
pub mod optim;
pub mod par;
pub mod policy;
pub mod reward;
pub mod rng;
pub mod sft;
pub mod tensor;

#[cfg(test)]
mod testutil;

pub use error::{AutodiffError, Error, Result};
