//! Supervised fine-tuning of the adapters on parallel pairs, and the same
//! teacher-forced cross-entropy used to pretrain the base model.

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::corpus::SplitCorpus;
use crate::error::{Error, Result};
use crate::grpo::train::{run_schedule, EpochOrder, Schedule};
use crate::grpo::{eval_subset, Method, Selection, StepLog, TrainOutcome};
use crate::optim::{AdamW, AdamWConfig};
use crate::policy::forward::{Dropout, Trainable};
use crate::policy::{PolicyModel, PolicyView, Prompt};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SftConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    pub max_eval_tokens: usize,
    pub eval_every: usize,
    pub eval_subset: usize,
    pub beam_width: usize,
    pub seed: u64,
}

impl Default for SftConfig {
    fn default() -> Self {
        SftConfig {
            epochs: 3,
            batch_size: 4,
            optimizer: AdamWConfig {
                lr: 3e-4,
                ..Default::default()
            },
            max_eval_tokens: 96,
            eval_every: 50,
            eval_subset: 100,
            beam_width: 4,
            seed: 17,
        }
    }
}

impl SftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.eval_every == 0 || self.eval_subset == 0 || self.beam_width == 0 {
            return Err(Error::Config(
                "batch_size, eval_every, eval_subset and beam_width must be positive".into(),
            ));
        }
        if self.optimizer.lr.is_nan() || self.optimizer.lr <= 0.0 {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.optimizer.lr)));
        }
        Ok(())
    }
}

/// Mean token-level cross-entropy of `target` (`BOS .. EOS`) under `view`.
pub fn sft_loss(view: PolicyView<'_>, prompt: &Prompt, target: &[usize]) -> Result<f64> {
    let lp = view.sequence_logprob(prompt, target)?;
    Ok(-lp / (target.len() - 1) as f64)
}

/// One cross-entropy update over `items`, averaged over all predicted
/// target positions. `trainable` picks the parameter group; the adapters
/// take part in the forward pass only when `adapters` is set.
pub fn cross_entropy_update(
    model: &mut PolicyModel,
    opt: &mut AdamW,
    items: &[(Prompt, Vec<usize>)],
    trainable: Trainable,
    adapters: bool,
    dropout_seed: u64,
) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if trainable == Trainable::Nothing || (trainable == Trainable::Adapters && !adapters) {
        return Err(Error::InvalidArgument("nothing to train".into()));
    }
    let mut tape = Tape::new();
    let bind = model.bind(&mut tape, adapters, trainable);
    let p = if adapters { model.lora().dropout } else { 0.0 };
    let mut dropout = Dropout::new(dropout_seed, p);
    let mut total = None;
    let mut positions = 0usize;
    for (prompt, target) in items {
        if target.len() < 2 {
            return Err(Error::InvalidSequence("empty target".into()));
        }
        positions += target.len() - 1;
        let v = model.tape_group_logprobs(&mut tape, &bind, Some(&mut dropout), prompt, std::slice::from_ref(target))?[0];
        total = Some(match total {
            Some(t) => tape.add(t, v)?,
            None => v,
        });
    }
    let loss = tape.scale(total.unwrap(), -1.0 / positions as f64)?;
    let value = tape.value(loss).item();
    let grads = tape.backward(loss)?;
    match trainable {
        Trainable::Base => opt.step(model.base_mut(), &grads),
        _ => opt.step(model.adapters_mut(), &grads),
    }
    Ok(value)
}

/// One adapter update on a batch of `(source, target)` pairs.
pub fn sft_step(
    model: &mut PolicyModel,
    opt: &mut AdamW,
    tag: &str,
    pairs: &[(&str, &str)],
    seed: u64,
    step: usize,
) -> Result<f64> {
    let items = pairs
        .iter()
        .map(|(s, t)| {
            if t.is_empty() {
                return Err(Error::InvalidSequence(format!("empty target for `{s}`")));
            }
            Ok((model.prompt(tag, s)?, model.target_ids(t)))
        })
        .collect::<Result<Vec<_>>>()?;
    let seed = rng::derive_seed(seed, &[rng::label("sft-dropout"), step as u64]);
    cross_entropy_update(model, opt, &items, Trainable::Adapters, true, seed)
}

/// Fine-tunes the adapters on the training pairs of `corpus`, with the
/// GRPO evaluation schedule.
pub fn sft_train(model: &mut PolicyModel, corpus: &SplitCorpus, cfg: &SftConfig, out: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let pairs: Vec<(&str, &str)> = corpus
        .train
        .iter()
        .map(|p| {
            p.target
                .as_deref()
                .map(|t| (p.source.as_str(), t))
                .ok_or_else(|| Error::InvalidArgument(format!("training pair `{}` has no target", p.source)))
        })
        .collect::<Result<_>>()?;
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("training corpus is empty".into()));
    }
    model.set_adapters(true);
    let n = pairs.len();
    let per_epoch = n.div_ceil(cfg.batch_size);
    let (sources, references) = eval_subset(corpus, cfg.eval_subset)?;
    let sched = Schedule {
        method: Method::Sft,
        tag: &corpus.task.tag,
        steps: cfg.epochs * per_epoch,
        eval_every: cfg.eval_every,
        sources,
        references,
        beam_width: cfg.beam_width,
        max_eval_tokens: cfg.max_eval_tokens,
        seed: cfg.seed,
        config: serde_json::to_value(cfg)?,
        selection: Selection::Chrf,
        reward: None,
    };
    let mut order = EpochOrder::new(n, cfg.seed);
    let mut opt = AdamW::new(cfg.optimizer.clone(), model.adapters());
    run_schedule(model, &sched, out, |model, s| {
        let (epoch, b) = (s / per_epoch, s % per_epoch);
        let lo = b * cfg.batch_size;
        let hi = (lo + cfg.batch_size).min(n);
        let batch: Vec<(&str, &str)> = (lo..hi).map(|i| pairs[order.get(epoch * n + i)]).collect();
        let loss = sft_step(model, &mut opt, &corpus.task.tag, &batch, cfg.seed, s)?;
        Ok((
            StepLog {
                method: Method::Sft,
                step: s,
                reward_mean: None,
                reward_std: None,
                l_clip: None,
                l_kl: None,
                total: loss,
                clip_frac: None,
                collapse: false,
            },
            None,
        ))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            steps: 1500,
            batch_size: 8,
            optimizer: AdamWConfig {
                lr: 2e-3,
                ..Default::default()
            },
            seed: 23,
        }
    }
}

/// Trains the base parameters (adapters off) on a mixture of tasks. Each
/// batch slot picks a task with probability proportional to its weight and
/// takes that task's next training pair. Returns the per-step losses.
pub fn pretrain_base(model: &mut PolicyModel, tasks: &[(&SplitCorpus, f64)], cfg: &PretrainConfig) -> Result<Vec<f64>> {
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut pools: Vec<Vec<(Prompt, Vec<usize>)>> = Vec::new();
    let mut weights = Vec::new();
    for (c, w) in tasks {
        if !(w.is_finite() && *w >= 0.0) {
            return Err(Error::Config(format!("pretraining weight of {} must be non-negative", c.task.id)));
        }
        let pool = c
            .train
            .iter()
            .map(|p| {
                let t = p.target.as_deref().ok_or_else(|| {
                    Error::InvalidArgument(format!("pretraining pair `{}` has no target", p.source))
                })?;
                Ok((model.prompt(&c.task.tag, &p.source)?, model.target_ids(t)))
            })
            .collect::<Result<Vec<_>>>()?;
        if pool.is_empty() || *w == 0.0 {
            continue;
        }
        pools.push(pool);
        weights.push(*w);
    }
    if pools.is_empty() {
        return Err(Error::InvalidArgument("no pretraining pairs".into()));
    }
    let pick = WeightedIndex::new(&weights).map_err(|e| Error::Config(e.to_string()))?;
    let mut draw = rng::stream(cfg.seed, &[rng::label("pretrain-mix")]);
    let mut orders: Vec<EpochOrder> = pools
        .iter()
        .enumerate()
        .map(|(i, p)| EpochOrder::new(p.len(), rng::derive_seed(cfg.seed, &[i as u64])))
        .collect();
    let mut cursor = vec![0usize; pools.len()];
    let was = model.adapters_enabled();
    model.set_adapters(false);
    let mut opt = AdamW::new(cfg.optimizer.clone(), model.base());
    let mut losses = Vec::with_capacity(cfg.steps);
    for s in 0..cfg.steps {
        let batch: Vec<(Prompt, Vec<usize>)> = (0..cfg.batch_size)
            .map(|_| {
                let t = pick.sample(&mut draw);
                let i = orders[t].get(cursor[t]);
                cursor[t] += 1;
                pools[t][i].clone()
            })
            .collect();
        let loss = cross_entropy_update(model, &mut opt, &batch, Trainable::Base, false, 0)?;
        if s % 100 == 0 {
            log::info!("pretrain step {s}: loss {loss:.4}");
        }
        losses.push(loss);
    }
    model.set_adapters(was);
    Ok(losses)
}
