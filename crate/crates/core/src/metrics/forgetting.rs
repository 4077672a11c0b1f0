//! Catastrophic-forgetting audit over held-out tasks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default degradation threshold in chrF++ points. An event needs a delta
/// strictly below `-threshold`.
pub const DEFAULT_THRESHOLD: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgettingEvent {
    pub task: String,
    pub baseline: f64,
    pub score: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgettingReport {
    pub threshold: f64,
    pub deltas: BTreeMap<String, f64>,
    pub events: Vec<ForgettingEvent>,
}

/// Compares held-out `scores` with `baseline` scores on identical eval sets.
pub fn forgetting_audit(
    scores: &BTreeMap<String, f64>,
    baseline: &BTreeMap<String, f64>,
    threshold: f64,
) -> Result<ForgettingReport> {
    let mut deltas = BTreeMap::new();
    let mut events = Vec::new();
    for (task, &score) in scores {
        let &base = baseline
            .get(task)
            .ok_or_else(|| Error::MissingBaseline(task.clone()))?;
        let delta = score - base;
        deltas.insert(task.clone(), delta);
        if delta < -threshold {
            events.push(ForgettingEvent {
                task: task.clone(),
                baseline: base,
                score,
                delta,
            });
        }
    }
    Ok(ForgettingReport {
        threshold,
        deltas,
        events,
    })
}
