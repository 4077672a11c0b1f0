//! One GRPO update: rollouts, rewards, advantages and the adapter step.

use serde::{Deserialize, Serialize};

use crate::autodiff::{finite_diff_check, Tape, Var};
use crate::error::{Error, Result};
use crate::grpo::algebra::{
    clip_active, clipped_loss, clipped_loss_tape, compute_advantages, group_mean, group_std, importance_ratios,
    kl_penalty, kl_penalty_tape,
};
use crate::grpo::config::GrpoConfig;
use crate::optim::AdamW;
use crate::par;
use crate::policy::forward::{Dropout, Trainable};
use crate::policy::{sample_group, Hypothesis, PolicyModel, Prompt};
use crate::reward::Reward;
use crate::rng;

/// A scored group ready for an update.
#[derive(Debug, Clone)]
pub struct GroupInput {
    pub prompt: Prompt,
    pub hypotheses: Vec<Hypothesis>,
    pub rewards: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub rewards: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub advantages: Vec<f64>,
    pub logp: Vec<f64>,
    pub logp_ref: Vec<f64>,
    pub ratios: Vec<f64>,
    pub clip_active: Vec<bool>,
    pub l_clip: f64,
    pub l_kl: f64,
    pub total: f64,
    pub unfinished: usize,
    pub hypotheses: Vec<String>,
}

impl GroupStats {
    pub fn clip_fraction(&self) -> f64 {
        self.clip_active.iter().filter(|&&c| c).count() as f64 / self.clip_active.len() as f64
    }
}

/// `L_clip + β·L_KL` on the tape; the KL term is left out when `β = 0`.
fn group_loss(tape: &mut Tape, lp: &[Var], logp_ref: &[f64], adv: &[f64], cfg: &GrpoConfig) -> Result<Var> {
    let mut loss = clipped_loss_tape(tape, lp, logp_ref, adv, cfg.eps_clip)?;
    if cfg.beta > 0.0 {
        let kl = kl_penalty_tape(tape, lp, logp_ref)?;
        let kl = tape.scale(kl, cfg.beta)?;
        loss = tape.add(loss, kl)?;
    }
    Ok(loss)
}

/// Largest relative error between the tape gradient of one group's loss
/// with respect to every adapter value and its central difference with
/// step `h`. Dropout is off so the loss is a deterministic function.
pub fn loss_gradient_error(model: &PolicyModel, group: &GroupInput, cfg: &GrpoConfig, h: f64) -> Result<f64> {
    if group.hypotheses.len() < 2 {
        return Err(Error::GroupTooSmall(group.hypotheses.len()));
    }
    let targets: Vec<Vec<usize>> = group.hypotheses.iter().map(|h| h.tokens.clone()).collect();
    let mut ref_tape = Tape::new();
    let reference = model.bind(&mut ref_tape, false, Trainable::Nothing);
    let ref_vars = model.tape_group_logprobs(&mut ref_tape, &reference, None, &group.prompt, &targets)?;
    let logp_ref: Vec<f64> = ref_vars.iter().map(|&v| ref_tape.value(v).item()).collect();
    let adv = compute_advantages(&group.rewards, cfg.eps);
    finite_diff_check(
        |tape: &mut Tape, vars: &[Var]| -> Result<Var> {
            let bind = model.bind_adapter_vars(tape, vars);
            let lp = model.tape_group_logprobs(tape, &bind, None, &group.prompt, &targets)?;
            group_loss(tape, &lp, &logp_ref, &adv, cfg)
        },
        model.adapters().tensors(),
        h,
    )
}

/// Applies one optimizer update to the adapters from already scored groups.
/// The update minimises the mean over groups of `L_clip + β·L_KL`, with
/// `π_ref` the frozen base (adapters off).
pub fn grpo_update(
    model: &mut PolicyModel,
    opt: &mut AdamW,
    groups: &[GroupInput],
    cfg: &GrpoConfig,
    step: usize,
) -> Result<Vec<GroupStats>> {
    if groups.is_empty() {
        return Err(Error::InvalidArgument("no groups to update on".into()));
    }
    let mut tape = Tape::new();
    let policy = model.bind(&mut tape, true, Trainable::Adapters);
    let mut ref_tape = Tape::new();
    let reference = model.bind(&mut ref_tape, false, Trainable::Nothing);
    let mut stats = Vec::with_capacity(groups.len());
    let mut losses = Vec::with_capacity(groups.len());
    for (g, group) in groups.iter().enumerate() {
        let k = group.hypotheses.len();
        if k < 2 {
            return Err(Error::GroupTooSmall(k));
        }
        if group.rewards.len() != k {
            return Err(Error::LengthMismatch(group.rewards.len(), k));
        }
        let targets: Vec<Vec<usize>> = group.hypotheses.iter().map(|h| h.tokens.clone()).collect();
        let ref_vars = model.tape_group_logprobs(&mut ref_tape, &reference, None, &group.prompt, &targets)?;
        let logp_ref: Vec<f64> = ref_vars.iter().map(|&v| ref_tape.value(v).item()).collect();

        let mut dropout = Dropout::new(
            rng::derive_seed(cfg.seed, &[rng::label("dropout"), step as u64, g as u64]),
            model.lora().dropout,
        );
        let lp_vars = model.tape_group_logprobs(&mut tape, &policy, Some(&mut dropout), &group.prompt, &targets)?;
        let logp: Vec<f64> = lp_vars.iter().map(|&v| tape.value(v).item()).collect();

        let ratios = importance_ratios(&logp, &logp_ref)?;
        let d: Vec<f64> = logp.iter().zip(&logp_ref).map(|(a, b)| a - b).collect();
        let adv = compute_advantages(&group.rewards, cfg.eps);
        let l_clip = clipped_loss(&ratios, &adv, cfg.eps_clip)?;
        let l_kl = if cfg.beta > 0.0 { kl_penalty(&d)? } else { 0.0 };
        losses.push(group_loss(&mut tape, &lp_vars, &logp_ref, &adv, cfg)?);
        stats.push(GroupStats {
            mean: group_mean(&group.rewards),
            std: group_std(&group.rewards),
            clip_active: clip_active(&ratios, &adv, cfg.eps_clip),
            rewards: group.rewards.clone(),
            advantages: adv,
            logp,
            logp_ref,
            ratios,
            l_clip,
            l_kl,
            total: l_clip + cfg.beta * l_kl,
            unfinished: group.hypotheses.iter().filter(|h| !h.finished).count(),
            hypotheses: group.hypotheses.iter().map(|h| h.text.clone()).collect(),
        });
    }
    let mut loss = losses[0];
    for &l in &losses[1..] {
        loss = tape.add(loss, l)?;
    }
    if losses.len() > 1 {
        loss = tape.scale(loss, 1.0 / losses.len() as f64)?;
    }
    let grads = tape.backward(loss)?;
    opt.step(model.adapters_mut(), &grads);
    Ok(stats)
}

/// Samples a group of `cfg.k` hypotheses per source from the current
/// policy, scores them with `reward` and applies one update.
pub fn grpo_step(
    model: &mut PolicyModel,
    opt: &mut AdamW,
    tag: &str,
    sources: &[&str],
    reward: &dyn Reward,
    cfg: &GrpoConfig,
    step: usize,
) -> Result<Vec<GroupStats>> {
    if !model.adapters_enabled() {
        return Err(Error::InvalidArgument("GRPO requires adapters to be enabled".into()));
    }
    let mut groups = Vec::with_capacity(sources.len());
    for (g, &src) in sources.iter().enumerate() {
        let prompt = model.prompt(tag, src)?;
        let seed = rng::derive_seed(cfg.seed, &[rng::label("rollout"), step as u64, g as u64]);
        let hyps = sample_group(
            model.view(true),
            model.view(false),
            &prompt,
            cfg.k,
            cfg.temperature,
            cfg.max_train_tokens,
            seed,
        )?;
        let rewards = par::try_map_indexed(hyps.len(), |i| reward.score(src, &hyps[i].text))?;
        groups.push(GroupInput {
            prompt,
            hypotheses: hyps,
            rewards,
        });
    }
    grpo_update(model, opt, &groups, cfg, step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::tiny_model;

    fn tiny() -> PolicyModel {
        tiny_model(3)
    }

    fn cfg() -> GrpoConfig {
        GrpoConfig {
            k: 4,
            max_train_tokens: 8,
            ..Default::default()
        }
    }

    #[test]
    fn equal_rewards_at_identity_leave_adapters_bit_identical() {
        let mut m = tiny();
        let before = m.adapters().flatten();
        let mut opt = AdamW::new(cfg().optimizer, m.adapters());
        let r = |_: &str, _: &str| Ok(0.5);
        let s = grpo_step(&mut m, &mut opt, "<2x>", &["ab c"], &r, &cfg(), 0).unwrap();
        assert!(s[0].ratios.iter().all(|&x| x == 1.0));
        assert_eq!(s[0].total, 0.0);
        assert_eq!(m.adapters().flatten(), before);
    }

    #[test]
    fn beta_zero_total_is_clip_loss() {
        let mut m = tiny();
        m.perturb_adapters(5, 0.3);
        let c = GrpoConfig { beta: 0.0, ..cfg() };
        let mut opt = AdamW::new(c.optimizer.clone(), m.adapters());
        let r = |_: &str, h: &str| Ok(h.len() as f64 / 8.0);
        let s = grpo_step(&mut m, &mut opt, "<2x>", &["abc"], &r, &c, 0).unwrap();
        assert_eq!(s[0].total, s[0].l_clip);
        assert_eq!(s[0].l_kl, 0.0);
    }

    #[test]
    fn favoured_hypothesis_gains_probability() {
        let mut m = tiny();
        let c = GrpoConfig {
            optimizer: crate::optim::AdamWConfig {
                lr: 1e-2,
                ..Default::default()
            },
            ..cfg()
        };
        let prompt = m.prompt("<2x>", "abc").unwrap();
        let hyps = sample_group(m.view(true), m.view(false), &prompt, 4, 1.0, 8, 9).unwrap();
        let mut rewards = vec![0.0; 4];
        rewards[2] = 1.0;
        let before = m.view(true).sequence_logprob(&prompt, &hyps[2].tokens).unwrap();
        let mut opt = AdamW::new(c.optimizer.clone(), m.adapters());
        let input = GroupInput {
            prompt: prompt.clone(),
            hypotheses: hyps.clone(),
            rewards,
        };
        // a few updates on the same group; B starts at zero, so the first
        // step only moves B
        for step in 0..3 {
            grpo_update(&mut m, &mut opt, std::slice::from_ref(&input), &c, step).unwrap();
        }
        let after = m.view(true).sequence_logprob(&prompt, &hyps[2].tokens).unwrap();
        assert!(after > before, "{before} -> {after}");
    }
}
