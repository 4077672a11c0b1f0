use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::AdamWConfig;

/// What picks the best checkpoint on the eval subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    /// chrF++ against the eval references.
    #[default]
    Chrf,
    /// Mean reward of the decoded eval sources; needs no references.
    Reward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrpoConfig {
    /// Hypotheses per group.
    pub k: usize,
    /// Advantage stability floor.
    pub eps: f64,
    pub eps_clip: f64,
    /// KL coefficient.
    pub beta: f64,
    pub optimizer: AdamWConfig,
    pub temperature: f64,
    pub max_train_tokens: usize,
    pub max_eval_tokens: usize,
    pub eval_every: usize,
    pub eval_subset: usize,
    pub beam_width: usize,
    pub steps: usize,
    /// Source groups per optimizer update.
    pub groups_per_step: usize,
    pub collapse_window: usize,
    pub collapse_floor: f64,
    pub selection: Selection,
    pub seed: u64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        GrpoConfig {
            k: 12,
            eps: 1e-4,
            eps_clip: 0.2,
            beta: 0.001,
            optimizer: AdamWConfig {
                lr: 3e-4,
                ..Default::default()
            },
            temperature: 1.2,
            max_train_tokens: 64,
            max_eval_tokens: 96,
            eval_every: 50,
            eval_subset: 100,
            beam_width: 4,
            steps: 600,
            groups_per_step: 1,
            collapse_window: 50,
            collapse_floor: 1e-3,
            selection: Selection::Chrf,
            seed: 17,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.k < 2 {
            return Err(Error::GroupTooSmall(self.k));
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if !(self.eps_clip > 0.0 && self.eps_clip < 1.0) {
            return bad(format!("eps_clip must lie in (0, 1), got {}", self.eps_clip));
        }
        if self.beta.is_nan() || self.beta < 0.0 {
            return bad(format!("beta must be non-negative, got {}", self.beta));
        }
        if self.temperature.is_nan() || self.temperature <= 0.0 {
            return bad(format!("temperature must be positive, got {}", self.temperature));
        }
        if self.optimizer.lr.is_nan() || self.optimizer.lr <= 0.0 {
            return bad(format!("learning rate must be positive, got {}", self.optimizer.lr));
        }
        if self.max_train_tokens == 0 || self.max_eval_tokens == 0 {
            return bad("token budgets must be positive".into());
        }
        if self.eval_every == 0 || self.eval_subset == 0 || self.beam_width == 0 {
            return bad("eval_every, eval_subset and beam_width must be positive".into());
        }
        if self.groups_per_step == 0 || self.collapse_window == 0 {
            return bad("groups_per_step and collapse_window must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_bad_values_do_not() {
        GrpoConfig::default().validate().unwrap();
        let c = GrpoConfig {
            k: 1,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(Error::GroupTooSmall(1))));
        for c in [
            GrpoConfig {
                eps: 0.0,
                ..Default::default()
            },
            GrpoConfig {
                eps_clip: 1.0,
                ..Default::default()
            },
            GrpoConfig {
                beta: -0.1,
                ..Default::default()
            },
        ] {
            assert!(matches!(c.validate(), Err(Error::Config(_))));
        }
    }
}
