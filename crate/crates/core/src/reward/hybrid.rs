//! Reward components and their weighted combination.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::TaskSpec;
use crate::error::{Error, Result};
use crate::metrics::sentence_chrf;
use crate::reward::embed::embed_similarity_reward;

/// chrF++ of the hypothesis against the task's ground-truth output, on
/// `[0, 1]`. This proxy consults the hidden transduction, much as a learned
/// quality estimator encodes supervision unavailable at fine-tuning time.
pub fn qe_proxy_reward(source: &str, hypothesis: &str, task: &TaskSpec) -> Result<f64> {
    let ideal = task.transduce(source).ok_or_else(|| {
        Error::ComponentUnavailable(
            "qe-proxy".into(),
            format!("task `{}` has no ground-truth transduction", task.id),
        )
    })?;
    Ok(sentence_chrf(hypothesis, &ideal) / 100.0)
}

type ScoreFn = dyn Fn(&str, &str) -> Result<f64> + Send + Sync;

#[derive(Clone)]
enum Scorer {
    Embedding,
    QeProxy(Option<Arc<TaskSpec>>),
    Custom(Arc<ScoreFn>),
}

#[derive(Clone)]
pub struct RewardComponent {
    pub name: String,
    pub weight: f64,
    scorer: Scorer,
}

impl std::fmt::Debug for RewardComponent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RewardComponent")
            .field("name", &self.name)
            .field("weight", &self.weight)
            .finish()
    }
}

impl RewardComponent {
    pub fn embedding(weight: f64) -> Self {
        RewardComponent {
            name: "embedding".into(),
            weight,
            scorer: Scorer::Embedding,
        }
    }

    /// QE proxy; without a synthetic task scoring fails as unavailable.
    pub fn qe_proxy(weight: f64, task: Option<TaskSpec>) -> Self {
        RewardComponent {
            name: "qe-proxy".into(),
            weight,
            scorer: Scorer::QeProxy(task.map(Arc::new)),
        }
    }

    pub fn custom(
        name: &str,
        weight: f64,
        f: impl Fn(&str, &str) -> Result<f64> + Send + Sync + 'static,
    ) -> Self {
        RewardComponent {
            name: name.into(),
            weight,
            scorer: Scorer::Custom(Arc::new(f)),
        }
    }

    pub fn score(&self, source: &str, hypothesis: &str) -> Result<f64> {
        let s = match &self.scorer {
            Scorer::Embedding => embed_similarity_reward(source, hypothesis),
            Scorer::QeProxy(Some(task)) => qe_proxy_reward(source, hypothesis, task)?,
            Scorer::QeProxy(None) => {
                return Err(Error::ComponentUnavailable(
                    self.name.clone(),
                    "no task with a ground-truth transduction".into(),
                ))
            }
            Scorer::Custom(f) => f(source, hypothesis)?,
        };
        if !s.is_finite() {
            return Err(Error::InvalidArgument(format!("component `{}` returned {s}", self.name)));
        }
        Ok(s)
    }
}

/// Component scores of one hypothesis and their weighted sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBundle {
    pub names: Vec<String>,
    pub scores: Vec<f64>,
    pub weights: Vec<f64>,
    pub hybrid: f64,
}

impl RewardBundle {
    pub fn recompute(&self) -> f64 {
        combine(&self.scores, &self.weights)
    }
}

fn combine(scores: &[f64], weights: &[f64]) -> f64 {
    scores.iter().zip(weights).map(|(s, w)| w * s).sum()
}

pub fn check_weights(components: &[RewardComponent]) -> Result<()> {
    let total: f64 = components.iter().map(|c| c.weight).sum();
    if components.is_empty()
        || (total - 1.0).abs() > 1e-12
        || components.iter().any(|c| !(0.0..=1.0).contains(&c.weight))
    {
        return Err(Error::WeightSum(total));
    }
    Ok(())
}

pub fn hybrid_reward(components: &[RewardComponent], source: &str, hypothesis: &str) -> Result<RewardBundle> {
    check_weights(components)?;
    let scores = components
        .iter()
        .map(|c| c.score(source, hypothesis))
        .collect::<Result<Vec<_>>>()?;
    let weights: Vec<f64> = components.iter().map(|c| c.weight).collect();
    Ok(RewardBundle {
        names: components.iter().map(|c| c.name.clone()).collect(),
        hybrid: combine(&scores, &weights),
        scores,
        weights,
    })
}

/// A validated component list usable as the GRPO reward.
#[derive(Debug, Clone)]
pub struct HybridReward {
    components: Vec<RewardComponent>,
}

impl HybridReward {
    pub fn new(components: Vec<RewardComponent>) -> Result<Self> {
        check_weights(&components)?;
        Ok(HybridReward { components })
    }

    /// Equal-weight embedding + QE proxy.
    pub fn default_for(task: &TaskSpec) -> Self {
        HybridReward {
            components: vec![
                RewardComponent::embedding(0.5),
                RewardComponent::qe_proxy(0.5, Some(task.clone())),
            ],
        }
    }

    pub fn components(&self) -> &[RewardComponent] {
        &self.components
    }

    pub fn bundle(&self, source: &str, hypothesis: &str) -> Result<RewardBundle> {
        hybrid_reward(&self.components, source, hypothesis)
    }
}

/// Scalar reward on detokenised text.
pub trait Reward: Sync {
    fn score(&self, source: &str, hypothesis: &str) -> Result<f64>;
}

impl Reward for HybridReward {
    fn score(&self, source: &str, hypothesis: &str) -> Result<f64> {
        Ok(self.bundle(source, hypothesis)?.hybrid)
    }
}

impl<F: Fn(&str, &str) -> Result<f64> + Sync> Reward for F {
    fn score(&self, source: &str, hypothesis: &str) -> Result<f64> {
        self(source, hypothesis)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed(v: f64, w: f64) -> RewardComponent {
        RewardComponent::custom(&format!("c{v}"), w, move |_, _| Ok(v))
    }

    #[test]
    fn arithmetic_mean_and_degenerate_weights() {
        let b = hybrid_reward(&[fixed(0.8, 0.5), fixed(0.6, 0.5)], "", "").unwrap();
        assert!((b.hybrid - 0.7).abs() < 1e-15);
        let b = hybrid_reward(&[fixed(0.8, 1.0), fixed(0.6, 0.0)], "", "").unwrap();
        assert_eq!(b.hybrid, 0.8);
        assert!(matches!(
            hybrid_reward(&[fixed(0.8, 0.5), fixed(0.6, 0.6)], "", ""),
            Err(Error::WeightSum(_))
        ));
    }

    #[test]
    fn qe_without_truth_is_unavailable() {
        let t = TaskSpec::external("x");
        assert!(matches!(qe_proxy_reward("a", "a", &t), Err(Error::ComponentUnavailable(..))));
    }
}
