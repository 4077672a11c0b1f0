//! Experiment templates. Each one trains its arms from the shared base,
//! persists one record per arm and builds its report from those records.
//! A failing arm is recorded with its error and the remaining arms run.

use crate::corpus::SplitCorpus;
use crate::error::Result;
use crate::eval::Decoding;
use crate::grpo::GrpoConfig;
use crate::harness::lab::{with_train_sources, ArmRecord, Lab, RunDir};
use crate::harness::report::{build_report, write_files, ExperimentKind, Manifest, ReportFiles, MANIFEST};
use crate::rng;
use crate::sft::SftConfig;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct RunResult {
    pub manifest: Manifest,
    pub records: Vec<ArmRecord>,
    pub files: ReportFiles,
}

impl RunResult {
    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, t)| t.as_str())
    }
}

fn isolate(task: &str, arm: &str, r: Result<Vec<ArmRecord>>) -> Vec<ArmRecord> {
    r.unwrap_or_else(|e| vec![ArmRecord::failed(task, arm, &e)])
}

fn param(mut recs: Vec<ArmRecord>, v: f64) -> Vec<ArmRecord> {
    for r in &mut recs {
        r.param = Some(v);
    }
    recs
}

struct Runner<'a> {
    lab: &'a Lab,
    dir: RunDir,
    records: Vec<ArmRecord>,
}

impl<'a> Runner<'a> {
    fn new(lab: &'a Lab, out: Option<&Path>) -> Result<Self> {
        let dir = RunDir::new(out)?;
        dir.write("config.toml", &lab.config.to_toml()?)?;
        Ok(Runner {
            lab,
            dir,
            records: Vec::new(),
        })
    }

    fn push(&mut self, recs: Vec<ArmRecord>) -> Result<()> {
        for r in recs {
            self.dir.save_record(&r)?;
            self.records.push(r);
        }
        Ok(())
    }

    fn baseline(&mut self, corpus: &SplitCorpus, arm: &str, decoding: Decoding) -> Result<()> {
        let r = self.lab.devtest_record(&self.lab.base, false, corpus, arm, decoding);
        self.push(isolate(&corpus.task.id, arm, r.map(|r| vec![r])))
    }

    fn grpo(&self, corpus: &SplitCorpus, arm: &str, cfg: &GrpoConfig, with_final: bool) -> Vec<ArmRecord> {
        let run = || {
            let before = self.lab.base.base_hash();
            let dir = self.dir.arm(&corpus.task.id, arm);
            let trained = self.lab.train_grpo(corpus, cfg, dir.as_deref())?;
            self.lab.trained_records(corpus, arm, trained, &before, with_final)
        };
        isolate(&corpus.task.id, arm, run())
    }

    fn sft(&self, corpus: &SplitCorpus, arm: &str, cfg: &SftConfig) -> Vec<ArmRecord> {
        let run = || {
            let before = self.lab.base.base_hash();
            let dir = self.dir.arm(&corpus.task.id, arm);
            let trained = self.lab.train_sft(corpus, cfg, dir.as_deref())?;
            self.lab.trained_records(corpus, arm, trained, &before, false)
        };
        isolate(&corpus.task.id, arm, run())
    }

    fn finish(self, experiment: ExperimentKind, exclude: Vec<String>, threshold: f64) -> Result<RunResult> {
        let manifest = Manifest {
            experiment,
            stats: self.lab.config.stats.clone(),
            records: self
                .records
                .iter()
                .map(|r| RunDir::record_path(&r.task, &r.arm))
                .collect(),
            exclude,
            forgetting_threshold: threshold,
        };
        let files = build_report(&manifest, &self.records)?;
        if let Some(root) = &self.dir.root {
            let mut text = serde_json::to_string_pretty(&manifest)?;
            text.push('\n');
            self.dir.write(MANIFEST, &text)?;
            write_files(root, &files)?;
        }
        Ok(RunResult {
            manifest,
            records: self.records,
            files,
        })
    }
}

pub fn sft_arm(epochs: usize) -> String {
    format!("sft-{epochs}ep")
}

/// Baseline, one SFT arm per configured epoch count and GRPO, per task.
pub fn run_experiment_a(lab: &Lab, out: Option<&Path>) -> Result<RunResult> {
    let cfg = &lab.config;
    let mut run = Runner::new(lab, out)?;
    for t in &lab.tasks {
        let c = &t.corpus;
        if cfg.arms.baseline {
            run.baseline(c, "baseline", lab.beam())?;
        }
        for &e in &cfg.arms.sft_epochs {
            let sc = SftConfig { epochs: e, ..cfg.sft.clone() };
            let recs = run.sft(c, &sft_arm(e), &sc);
            run.push(recs)?;
        }
        if cfg.arms.grpo {
            let recs = run.grpo(c, "grpo", &cfg.grpo, false);
            run.push(recs)?;
        }
    }
    run.finish(ExperimentKind::ExperimentA, Vec::new(), 0.0)
}

/// GRPO on reference-free sources from the out-of-domain distribution,
/// scored at both the best and the final checkpoint.
pub fn run_experiment_b(lab: &Lab, out: Option<&Path>) -> Result<RunResult> {
    let cfg = &lab.config;
    let b = &cfg.experiment_b;
    let mut run = Runner::new(lab, out)?;
    for t in &lab.tasks {
        let c = &t.corpus;
        run.baseline(c, "baseline", lab.beam())?;
        let seed = rng::derive_seed(cfg.seed, &[rng::label("ood"), rng::label(&t.config.id)]);
        let recs = match b.distribution.sample_sentences(b.pool_size, seed) {
            Ok(pool) => run.grpo(&with_train_sources(c, pool), "grpo", &cfg.grpo, true),
            Err(e) => vec![ArmRecord::failed(&c.task.id, "grpo", &e)],
        };
        run.push(recs)?;
    }
    run.finish(ExperimentKind::ExperimentB, Vec::new(), 0.0)
}

pub fn beta_arm(beta: f64) -> String {
    format!("grpo-beta{beta}")
}

/// One GRPO arm per β in the grid.
pub fn run_kl_ablation(lab: &Lab, out: Option<&Path>) -> Result<RunResult> {
    let cfg = &lab.config;
    if cfg.ablation.betas.is_empty() {
        return Err(crate::error::Error::Config("ablation.betas is empty".into()));
    }
    let mut run = Runner::new(lab, out)?;
    for t in &lab.tasks {
        let c = &t.corpus;
        run.baseline(c, "baseline", lab.beam())?;
        for &beta in &cfg.ablation.betas {
            let g = GrpoConfig { beta, ..cfg.grpo.clone() };
            let recs = param(run.grpo(c, &beta_arm(beta), &g, false), beta);
            run.push(recs)?;
        }
    }
    run.finish(ExperimentKind::KlAblation, Vec::new(), 0.0)
}

/// SFT and GRPO on the first N training pairs for each N in the grid.
pub fn run_datasize_ablation(lab: &Lab, out: Option<&Path>) -> Result<RunResult> {
    let cfg = &lab.config;
    let sizes = &cfg.ablation.sizes;
    if sizes.is_empty() {
        return Err(crate::error::Error::Config("ablation.sizes is empty".into()));
    }
    for t in &lab.tasks {
        if let Some(&n) = sizes.iter().find(|&&n| n == 0 || n > t.corpus.train.len()) {
            return Err(crate::error::Error::Config(format!(
                "training size {n} outside 1..={} for task `{}`",
                t.corpus.train.len(),
                t.config.id
            )));
        }
    }
    let mut run = Runner::new(lab, out)?;
    for t in &lab.tasks {
        let c = &t.corpus;
        run.baseline(c, "baseline", lab.beam())?;
        for &n in sizes {
            let sub = c.truncate_train(n)?;
            let recs = param(run.sft(&sub, &format!("sft-n{n}"), &cfg.sft), n as f64);
            run.push(recs)?;
            let recs = param(run.grpo(&sub, &format!("grpo-n{n}"), &cfg.grpo, false), n as f64);
            run.push(recs)?;
        }
    }
    run.finish(ExperimentKind::DatasizeAblation, Vec::new(), 0.0)
}

/// The untrained base under every configured decoding regime against the
/// GRPO best checkpoint under beam search.
pub fn run_decoding_control(lab: &Lab, out: Option<&Path>) -> Result<RunResult> {
    let cfg = &lab.config;
    let mut run = Runner::new(lab, out)?;
    for t in &lab.tasks {
        let c = &t.corpus;
        run.baseline(c, "baseline", lab.beam())?;
        for d in &cfg.decoding.regimes {
            run.baseline(c, &format!("baseline-{}", d.label()), *d)?;
        }
        let recs = run.grpo(c, "grpo", &cfg.grpo, false);
        run.push(recs)?;
    }
    run.finish(ExperimentKind::DecodingControl, Vec::new(), 0.0)
}

/// Baseline and GRPO on every task, then the headroom correlation.
pub fn run_headroom(lab: &Lab, out: Option<&Path>) -> Result<RunResult> {
    let cfg = &lab.config;
    let mut run = Runner::new(lab, out)?;
    for t in &lab.tasks {
        let c = &t.corpus;
        run.baseline(c, "baseline", lab.beam())?;
        let recs = run.grpo(c, "grpo", &cfg.grpo, false);
        run.push(recs)?;
    }
    run.finish(ExperimentKind::Headroom, cfg.headroom.exclude.clone(), 0.0)
}

/// Trains adapters on one task and scores every task with and without
/// them.
pub fn run_forgetting(lab: &Lab, out: Option<&Path>) -> Result<RunResult> {
    let cfg = &lab.config;
    let train_id = cfg
        .forgetting
        .train_task
        .clone()
        .unwrap_or_else(|| lab.tasks[0].config.id.clone());
    let ti = lab.task_index(&train_id)?;
    let mut run = Runner::new(lab, out)?;
    let dir = run.dir.arm(&train_id, "grpo");
    let (mut model, outcome) = lab.train_grpo(&lab.tasks[ti].corpus, &cfg.grpo, dir.as_deref())?;
    model.adapters_mut().replace(outcome.best_adapters)?;
    for t in &lab.tasks {
        let c = &t.corpus;
        run.baseline(c, "baseline", lab.beam())?;
        let r = lab.devtest_record(&model, true, c, "adapted", lab.beam());
        run.push(isolate(&c.task.id, "adapted", r.map(|r| vec![r])))?;
    }
    run.finish(ExperimentKind::Forgetting, Vec::new(), cfg.forgetting.threshold)
}
