//! Group-relative policy optimisation over the LoRA adapters.

pub mod algebra;
mod collapse;
mod config;
mod step;
pub(crate) mod train;

pub use algebra::{
    clip_active, clipped_loss, compute_advantages, group_mean, group_std, importance_ratios, kl_penalty,
};
pub use collapse::{detect_variance_collapse, median, CollapseEvent, CollapseMonitor};
pub use config::{GrpoConfig, Selection};
pub use step::{grpo_step, grpo_update, loss_gradient_error, GroupInput, GroupStats};
pub use train::{
    devtest_refs, eval_subset, train, BestRecord, EvalPoint, Method, StepLog, TrainOutcome, TrainState, TraceWriter,
};
