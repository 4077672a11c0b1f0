//! The training loop shared by GRPO and SFT: periodic evaluation on a held
//! out subset, best-checkpoint selection and JSONL/CSV traces.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::SplitCorpus;
use crate::error::{Error, Result};
use crate::eval::{evaluate, Decoding};
use crate::grpo::collapse::{CollapseEvent, CollapseMonitor};
use crate::grpo::config::{GrpoConfig, Selection};
use crate::grpo::step::grpo_step;
use crate::optim::AdamW;
use crate::policy::{Checkpoint, ParamStore, PolicyModel, RngState};
use crate::par;
use crate::reward::Reward;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Grpo,
    Sft,
}

/// One JSONL trace line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub method: Method,
    pub step: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reward_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reward_std: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub l_clip: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub l_kl: Option<f64>,
    pub total: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub clip_frac: Option<f64>,
    pub collapse: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub method: Method,
    pub step: usize,
    pub chrf: f64,
    pub bleu: f64,
    /// Mean reward of the decoded outputs, when a reward is attached.
    pub reward: Option<f64>,
    pub unfinished: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestRecord {
    pub step: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub step: usize,
    pub best: BestRecord,
    pub collapse_events: Vec<CollapseEvent>,
    pub log: Vec<StepLog>,
    pub evals: Vec<EvalPoint>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub best_adapters: ParamStore,
}

/// Writes traces and checkpoints under an optional output directory.
pub struct TraceWriter {
    dir: Option<PathBuf>,
    steps: Option<BufWriter<File>>,
    evals: Option<csv::Writer<File>>,
}

impl TraceWriter {
    pub fn new(dir: Option<&Path>) -> Result<Self> {
        let Some(dir) = dir else {
            return Ok(TraceWriter {
                dir: None,
                steps: None,
                evals: None,
            });
        };
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let sp = dir.join("steps.jsonl");
        let steps = File::create(&sp).map_err(|e| Error::io(&sp, e))?;
        let ep = dir.join("evals.csv");
        let evals = csv::Writer::from_path(&ep)?;
        Ok(TraceWriter {
            dir: Some(dir.to_path_buf()),
            steps: Some(BufWriter::new(steps)),
            evals: Some(evals),
        })
    }

    fn step(&mut self, log: &StepLog) -> Result<()> {
        if let Some(w) = self.steps.as_mut() {
            let path = self.dir.as_ref().unwrap().join("steps.jsonl");
            serde_json::to_writer(&mut *w, log)?;
            w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    fn eval(&mut self, p: &EvalPoint) -> Result<()> {
        if let Some(w) = self.evals.as_mut() {
            w.serialize(p)?;
            w.flush().map_err(|e| Error::io("evals.csv", e))?;
        }
        Ok(())
    }

    fn checkpoint(&self, name: &str, ck: impl FnOnce() -> Checkpoint) -> Result<()> {
        if let Some(dir) = &self.dir {
            ck().save(&dir.join(name))?;
        }
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        if let Some(w) = self.steps.as_mut() {
            w.flush().map_err(|e| Error::io("steps.jsonl", e))?;
        }
        Ok(())
    }
}

/// The first `n` eval pairs, all of which must carry references.
pub fn eval_subset(corpus: &SplitCorpus, n: usize) -> Result<(Vec<&str>, Vec<&str>)> {
    split_refs(corpus, &corpus.eval[..n.min(corpus.eval.len())], "eval")
}

/// Sources and references of the devtest split.
pub fn devtest_refs(corpus: &SplitCorpus) -> Result<(Vec<&str>, Vec<&str>)> {
    split_refs(corpus, &corpus.devtest, "devtest")
}

fn split_refs<'c>(corpus: &SplitCorpus, pairs: &'c [crate::corpus::Pair], split: &str) -> Result<(Vec<&'c str>, Vec<&'c str>)> {
    let mut srcs = Vec::new();
    let mut refs = Vec::new();
    for p in pairs {
        let t = p.target.as_deref().ok_or_else(|| {
            Error::InvalidArgument(format!("{split} pair `{}` of task {} has no reference", p.source, corpus.task.id))
        })?;
        srcs.push(p.source.as_str());
        refs.push(t);
    }
    if srcs.is_empty() {
        return Err(Error::InvalidArgument(format!("task {} has no {split} pairs", corpus.task.id)));
    }
    Ok((srcs, refs))
}

pub(crate) struct Schedule<'a> {
    pub method: Method,
    pub tag: &'a str,
    pub steps: usize,
    pub eval_every: usize,
    pub sources: Vec<&'a str>,
    pub references: Vec<&'a str>,
    pub beam_width: usize,
    pub max_eval_tokens: usize,
    pub seed: u64,
    pub config: serde_json::Value,
    pub selection: Selection,
    pub reward: Option<&'a dyn Reward>,
}

impl Schedule<'_> {
    fn score(&self, p: &EvalPoint) -> f64 {
        match self.selection {
            Selection::Chrf => p.chrf,
            Selection::Reward => p.reward.unwrap_or(f64::NEG_INFINITY),
        }
    }

    fn eval(&self, model: &PolicyModel, step: usize) -> Result<EvalPoint> {
        let r = evaluate(
            model.view(true),
            self.tag,
            &self.sources,
            &self.references,
            Decoding::Beam { width: self.beam_width },
            self.max_eval_tokens,
        )?;
        let reward = match self.reward {
            Some(f) => {
                let s = par::try_map_indexed(self.sources.len(), |i| f.score(self.sources[i], &r.hypotheses[i]))?;
                Some(s.iter().sum::<f64>() / s.len() as f64)
            }
            None => None,
        };
        Ok(EvalPoint {
            method: self.method,
            step,
            chrf: r.chrf,
            bleu: r.bleu,
            reward,
            unfinished: r.unfinished,
        })
    }
}

/// Runs `step_fn` for each step, evaluating at step 0, every `eval_every`
/// steps and at the end. The best adapters are kept on strict improvement.
pub(crate) fn run_schedule(
    model: &mut PolicyModel,
    sched: &Schedule<'_>,
    out: Option<&Path>,
    mut step_fn: impl FnMut(&mut PolicyModel, usize) -> Result<(StepLog, Option<CollapseEvent>)>,
) -> Result<TrainOutcome> {
    let mut writer = TraceWriter::new(out)?;
    let first = sched.eval(model, 0)?;
    writer.eval(&first)?;
    log::info!("{:?} step 0: chrF++ {:.2}", sched.method, first.chrf);
    let mut state = TrainState {
        step: 0,
        best: BestRecord {
            step: 0,
            score: sched.score(&first),
        },
        collapse_events: Vec::new(),
        log: Vec::new(),
        evals: vec![first],
    };
    let mut best_adapters = model.adapters().clone();
    let ckpt = |m: &PolicyModel, step: usize| Checkpoint {
        config: sched.config.clone(),
        step: step as u64,
        rng: RngState {
            seed: sched.seed,
            step: step as u64,
        },
        model: m.clone(),
    };
    writer.checkpoint("best.ckpt", || ckpt(model, 0))?;
    for s in 0..sched.steps {
        let (entry, event) = step_fn(model, s)?;
        writer.step(&entry)?;
        state.log.push(entry);
        if let Some(e) = event {
            log::warn!("reward-variance collapse at step {} (median std {:.2e})", e.step, e.median);
            state.collapse_events.push(e);
        }
        state.step = s + 1;
        if state.step % sched.eval_every == 0 || state.step == sched.steps {
            let p = sched.eval(model, state.step)?;
            writer.eval(&p)?;
            log::info!("{:?} step {}: chrF++ {:.2}", sched.method, p.step, p.chrf);
            if sched.score(&p) > state.best.score {
                state.best = BestRecord {
                    step: p.step,
                    score: sched.score(&p),
                };
                best_adapters = model.adapters().clone();
                writer.checkpoint("best.ckpt", || ckpt(model, p.step))?;
            }
            state.evals.push(p);
        }
    }
    writer.checkpoint("final.ckpt", || ckpt(model, state.step))?;
    writer.finish()?;
    Ok(TrainOutcome { state, best_adapters })
}

/// Index of the training pair used at position `i` of the visiting order:
/// each epoch is a fresh seeded permutation.
pub(crate) struct EpochOrder {
    n: usize,
    seed: u64,
    epoch: Option<(usize, Vec<usize>)>,
}

impl EpochOrder {
    pub fn new(n: usize, seed: u64) -> Self {
        EpochOrder { n, seed, epoch: None }
    }

    pub fn get(&mut self, i: usize) -> usize {
        let e = i / self.n;
        if self.epoch.as_ref().map(|(k, _)| *k) != Some(e) {
            let mut perm: Vec<usize> = (0..self.n).collect();
            perm.shuffle(&mut rng::stream(self.seed, &[rng::label("order"), e as u64]));
            self.epoch = Some((e, perm));
        }
        self.epoch.as_ref().unwrap().1[i % self.n]
    }
}

/// Trains the adapters of `model` with GRPO on the training sources of
/// `corpus`. The model ends holding the final adapters; the best ones are
/// returned.
pub fn train(
    model: &mut PolicyModel,
    corpus: &SplitCorpus,
    reward: &dyn Reward,
    cfg: &GrpoConfig,
    out: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if corpus.train.is_empty() {
        return Err(Error::InvalidArgument("training corpus is empty".into()));
    }
    model.set_adapters(true);
    let (sources, references) = eval_subset(corpus, cfg.eval_subset)?;
    let sched = Schedule {
        method: Method::Grpo,
        tag: &corpus.task.tag,
        steps: cfg.steps,
        eval_every: cfg.eval_every,
        sources,
        references,
        beam_width: cfg.beam_width,
        max_eval_tokens: cfg.max_eval_tokens,
        seed: cfg.seed,
        config: serde_json::to_value(cfg)?,
        selection: cfg.selection,
        reward: Some(reward),
    };
    let train = corpus.train_sources();
    let mut order = EpochOrder::new(train.len(), cfg.seed);
    let mut opt = AdamW::new(cfg.optimizer.clone(), model.adapters());
    let mut monitor = CollapseMonitor::new(cfg.collapse_window, cfg.collapse_floor);
    run_schedule(model, &sched, out, |model, s| {
        let batch: Vec<&str> = (0..cfg.groups_per_step)
            .map(|g| train[order.get(s * cfg.groups_per_step + g)])
            .collect();
        let stats = grpo_step(model, &mut opt, &corpus.task.tag, &batch, reward, cfg, s)?;
        let n = stats.len() as f64;
        let avg = |f: &dyn Fn(&crate::grpo::GroupStats) -> f64| stats.iter().map(f).sum::<f64>() / n;
        let std = avg(&|g| g.std);
        let (collapse, event) = monitor.push(s, std);
        let entry = StepLog {
            method: Method::Grpo,
            step: s,
            reward_mean: Some(avg(&|g| g.mean)),
            reward_std: Some(std),
            l_clip: Some(avg(&|g| g.l_clip)),
            l_kl: Some(avg(&|g| g.l_kl)),
            total: avg(&|g| g.total),
            clip_frac: Some(avg(&|g| g.clip_fraction())),
            collapse,
        };
        Ok((entry, event))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epoch_order_is_a_permutation_per_epoch() {
        let mut o = EpochOrder::new(7, 3);
        for e in 0..3 {
            let mut v: Vec<usize> = (0..7).map(|i| o.get(e * 7 + i)).collect();
            v.sort();
            assert_eq!(v, (0..7).collect::<Vec<_>>());
        }
        let a: Vec<usize> = (0..7).map(|i| o.get(i)).collect();
        let b: Vec<usize> = (7..14).map(|i| o.get(i)).collect();
        assert_ne!(a, b);
    }
}
