//! Corpora, the pretrained base and single-arm runs shared by every
//! experiment template.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{gen_corpus, gen_task, Pair, SplitCorpus, SplitSizes, SOURCE_ALPHABET};
use crate::error::{Error, Result};
use crate::eval::{evaluate, Decoding};
use crate::grpo::{self, devtest_refs, GrpoConfig, TrainOutcome};
use crate::harness::config::{ExperimentConfig, TaskConfig};
use crate::metrics::ChrfStats;
use crate::policy::{PolicyModel, Vocabulary};
use crate::reward::{HybridReward, RewardComponent};
use crate::rng;
use crate::sft::{pretrain_base, sft_train, SftConfig};

/// One configured task with its splits and pretraining pool.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub config: TaskConfig,
    pub corpus: SplitCorpus,
    pub pretrain: SplitCorpus,
}

/// Devtest outcome of one arm, persisted as `devtest.json`. Reports are
/// computed from these records only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmRecord {
    pub task: String,
    pub arm: String,
    pub decoding: String,
    pub chrf: f64,
    pub bleu: f64,
    pub stats: Vec<ChrfStats>,
    pub hypotheses: Vec<String>,
    /// Grid value of the arm (β or training size) in ablations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_step: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default)]
    pub collapse_events: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_l_kl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_hash_before: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_hash_after: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ArmRecord {
    pub fn failed(task: &str, arm: &str, e: &Error) -> Self {
        ArmRecord {
            task: task.into(),
            arm: arm.into(),
            decoding: String::new(),
            chrf: 0.0,
            bleu: 0.0,
            stats: Vec::new(),
            hypotheses: Vec::new(),
            param: None,
            best_step: None,
            steps: None,
            collapse_events: 0,
            max_l_kl: None,
            base_hash_before: None,
            base_hash_after: None,
            error: Some(e.to_string()),
        }
    }

    pub fn ok(&self) -> bool {
        self.error.is_none()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(d) = path.parent() {
            fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Everything the experiment templates share.
#[derive(Debug, Clone)]
pub struct Lab {
    pub config: ExperimentConfig,
    pub tasks: Vec<TaskData>,
    pub base: PolicyModel,
    pub pretrain_losses: Vec<f64>,
}

pub fn task_seed(cfg: &ExperimentConfig, t: &TaskConfig) -> u64 {
    t.seed
        .unwrap_or_else(|| rng::derive_seed(cfg.seed, &[rng::label("task"), rng::label(&t.id)]))
}

/// Generates the splits and pretraining pool of every configured task.
pub fn build_tasks(cfg: &ExperimentConfig) -> Result<Vec<TaskData>> {
    let c = &cfg.corpus;
    cfg.tasks
        .iter()
        .map(|t| {
            let seed = task_seed(cfg, t);
            let spec = gen_task(&t.id, t.kind, t.difficulty.clone(), seed);
            let n = c.train + c.eval + c.devtest + c.pretrain_pool;
            let sizes = SplitSizes {
                eval: c.eval,
                devtest: c.devtest,
            };
            let cseed = rng::derive_seed(cfg.seed, &[rng::label("corpus"), rng::label(&t.id)]);
            let mut corpus = gen_corpus(&spec, &c.distribution, n, None, sizes, cseed)?;
            let pool = corpus.train.split_off(c.train);
            let pretrain = SplitCorpus {
                task: spec,
                train: pool,
                eval: Vec::new(),
                devtest: Vec::new(),
                seed: cseed,
            };
            Ok(TaskData {
                config: t.clone(),
                corpus,
                pretrain,
            })
        })
        .collect()
}

pub fn build_vocab(tasks: &[TaskData]) -> Result<Vocabulary> {
    let mut chars: Vec<char> = SOURCE_ALPHABET.chars().collect();
    chars.push(' ');
    for t in tasks {
        chars.extend(t.corpus.task.target_chars());
        for p in t.corpus.train.iter().chain(&t.corpus.eval).chain(&t.corpus.devtest) {
            chars.extend(p.source.chars());
            chars.extend(p.target.iter().flat_map(|s| s.chars()));
        }
    }
    Vocabulary::new(tasks.iter().map(|t| t.corpus.task.tag.clone()), chars)
}

impl Lab {
    /// Builds the corpora and an initialised, untrained base.
    pub fn untrained(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let tasks = build_tasks(config)?;
        let vocab = build_vocab(&tasks)?;
        let base = PolicyModel::init(
            config.model.dims.clone(),
            config.model.lora.clone(),
            vocab,
            rng::derive_seed(config.seed, &[rng::label("init")]),
        )?;
        Ok(Lab {
            config: config.clone(),
            tasks,
            base,
            pretrain_losses: Vec::new(),
        })
    }

    /// Builds the corpora and pretrains the base on the weighted mixture.
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        let mut lab = Self::untrained(config)?;
        let mix: Vec<(&SplitCorpus, f64)> = lab
            .tasks
            .iter()
            .map(|t| (&t.pretrain, t.config.pretrain_weight))
            .collect();
        lab.pretrain_losses = pretrain_base(&mut lab.base, &mix, &config.pretrain)?;
        Ok(lab)
    }

    /// Uses an already pretrained base. Its vocabulary must match the one
    /// the configured tasks need.
    pub fn with_base(config: &ExperimentConfig, base: PolicyModel) -> Result<Self> {
        let mut lab = Self::untrained(config)?;
        if base.vocab() != lab.base.vocab() {
            return Err(Error::Config("checkpoint vocabulary does not match the configured tasks".into()));
        }
        lab.base = base;
        lab.base.set_adapters(true);
        Ok(lab)
    }

    pub fn task_index(&self, id: &str) -> Result<usize> {
        self.tasks
            .iter()
            .position(|t| t.config.id == id)
            .ok_or_else(|| Error::Config(format!("unknown task `{id}`")))
    }

    pub fn reward(&self, task: usize) -> Result<HybridReward> {
        let r = &self.config.reward;
        HybridReward::new(vec![
            RewardComponent::embedding(r.embedding),
            RewardComponent::qe_proxy(r.qe_proxy, Some(self.tasks[task].corpus.task.clone())),
        ])
    }

    /// A fresh copy of the base: frozen weights, initial adapters.
    pub fn fresh(&self) -> PolicyModel {
        let mut m = self.base.clone();
        m.set_adapters(true);
        m
    }

    pub fn beam(&self) -> Decoding {
        Decoding::Beam {
            width: self.config.grpo.beam_width,
        }
    }

    /// Scores `model` on the devtest split of `corpus`.
    pub fn devtest_record(
        &self,
        model: &PolicyModel,
        adapters: bool,
        corpus: &SplitCorpus,
        arm: &str,
        decoding: Decoding,
    ) -> Result<ArmRecord> {
        let (srcs, refs) = devtest_refs(corpus)?;
        let r = evaluate(
            model.view(adapters),
            &corpus.task.tag,
            &srcs,
            &refs,
            decoding,
            self.config.grpo.max_eval_tokens,
        )?;
        Ok(ArmRecord {
            task: corpus.task.id.clone(),
            arm: arm.into(),
            decoding: decoding.label(),
            chrf: r.chrf,
            bleu: r.bleu,
            stats: r.stats,
            hypotheses: r.hypotheses,
            param: None,
            best_step: None,
            steps: None,
            collapse_events: 0,
            max_l_kl: None,
            base_hash_before: None,
            base_hash_after: None,
            error: None,
        })
    }

    /// GRPO from the shared initial adapters. The returned model holds the
    /// final adapters.
    pub fn train_grpo(
        &self,
        corpus: &SplitCorpus,
        cfg: &GrpoConfig,
        dir: Option<&Path>,
    ) -> Result<(PolicyModel, TrainOutcome)> {
        let task = self.task_index(&corpus.task.id)?;
        let reward = self.reward(task)?;
        let mut m = self.fresh();
        let out = grpo::train(&mut m, corpus, &reward, cfg, dir)?;
        Ok((m, out))
    }

    pub fn train_sft(
        &self,
        corpus: &SplitCorpus,
        cfg: &SftConfig,
        dir: Option<&Path>,
    ) -> Result<(PolicyModel, TrainOutcome)> {
        let mut m = self.fresh();
        let out = sft_train(&mut m, corpus, cfg, dir)?;
        Ok((m, out))
    }

    /// Trains one arm and records its best checkpoint on devtest (and the
    /// final one under `<arm>-final` when `with_final`).
    pub fn trained_records(
        &self,
        corpus: &SplitCorpus,
        arm: &str,
        trained: (PolicyModel, TrainOutcome),
        before: &str,
        with_final: bool,
    ) -> Result<Vec<ArmRecord>> {
        let (mut m, out) = trained;
        let mut recs = Vec::new();
        let max_kl = out
            .state
            .log
            .iter()
            .filter_map(|l| l.l_kl)
            .fold(None, |a: Option<f64>, x| Some(a.map_or(x, |a| a.max(x))));
        let annotate = |r: &mut ArmRecord, m: &PolicyModel, best: Option<usize>| {
            r.best_step = best;
            r.steps = Some(out.state.step);
            r.collapse_events = out.state.collapse_events.len();
            r.max_l_kl = max_kl;
            r.base_hash_before = Some(before.to_string());
            r.base_hash_after = Some(m.base_hash());
        };
        if with_final {
            let mut r = self.devtest_record(&m, true, corpus, &format!("{arm}-final"), self.beam())?;
            annotate(&mut r, &m, Some(out.state.step));
            recs.push(r);
        }
        m.adapters_mut().replace(out.best_adapters.clone())?;
        let mut r = self.devtest_record(&m, true, corpus, arm, self.beam())?;
        annotate(&mut r, &m, Some(out.state.best.step));
        recs.insert(0, r);
        Ok(recs)
    }
}

/// Output paths of one experiment run.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: Option<PathBuf>,
}

impl RunDir {
    pub fn new(root: Option<&Path>) -> Result<Self> {
        if let Some(r) = root {
            fs::create_dir_all(r).map_err(|e| Error::io(r, e))?;
        }
        Ok(RunDir {
            root: root.map(Path::to_path_buf),
        })
    }

    pub fn arm(&self, task: &str, arm: &str) -> Option<PathBuf> {
        self.root.as_ref().map(|r| r.join(task).join(arm))
    }

    pub fn record_path(task: &str, arm: &str) -> String {
        format!("{task}/{arm}/devtest.json")
    }

    pub fn save_record(&self, r: &ArmRecord) -> Result<()> {
        if let Some(root) = &self.root {
            r.save(&root.join(Self::record_path(&r.task, &r.arm)))?;
        }
        Ok(())
    }

    pub fn write(&self, name: &str, text: &str) -> Result<()> {
        if let Some(root) = &self.root {
            let p = root.join(name);
            fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

/// Replaces the training sources with a reference-free pool.
pub fn with_train_sources(corpus: &SplitCorpus, sources: Vec<String>) -> SplitCorpus {
    let mut c = corpus.clone();
    c.train = sources
        .into_iter()
        .map(|s| Pair {
            source: s,
            target: None,
        })
        .collect();
    c
}
