mod common;

use mtgrpo::harness::config::TaskConfig;
use mtgrpo::harness::report::regenerate;
use mtgrpo::harness::{
    run_datasize_ablation, run_decoding_control, run_experiment_a, run_experiment_b, run_forgetting, run_kl_ablation,
    ExperimentConfig, Lab,
};

use common::small_config;

#[test]
fn zero_step_arms_reproduce_the_baseline_exactly() {
    let mut c = small_config();
    c.grpo.steps = 0;
    c.arms.sft_epochs = vec![0];
    let lab = Lab::new(&c).unwrap();
    let run = run_experiment_a(&lab, None).unwrap();
    let base = &run.records[0];
    assert_eq!(base.arm, "baseline");
    for r in &run.records[1..] {
        assert!(r.ok(), "{:?}", r.error);
        assert_eq!(r.hypotheses, base.hypotheses, "{}", r.arm);
        assert_eq!(r.chrf, base.chrf);
    }
    let table = run.file("experiment_a.csv").unwrap();
    assert!(table.lines().nth(1).unwrap().ends_with(",+0.00,+0.00"), "{table}");
}

#[test]
fn reports_regenerate_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let lab = Lab::new(&small_config()).unwrap();
    let run = run_experiment_a(&lab, Some(dir.path())).unwrap();
    assert_eq!(regenerate(dir.path()).unwrap(), run.files);
    for (name, text) in &run.files {
        assert_eq!(&std::fs::read_to_string(dir.path().join(name)).unwrap(), text);
    }
    assert!(dir.path().join("cipher/grpo/steps.jsonl").exists());
    assert!(dir.path().join("config.toml").exists());
}

fn two_tasks() -> ExperimentConfig {
    let mut c = small_config();
    c.tasks = vec![
        TaskConfig::cipher("cipher"),
        TaskConfig {
            kind: mtgrpo::corpus::TransductionKind::Reversal,
            ..TaskConfig::cipher("rev")
        },
    ];
    c
}

#[test]
fn a_failing_arm_leaves_the_others_untouched() {
    let lab = Lab::new(&two_tasks()).unwrap();
    let clean = run_experiment_a(&lab, None).unwrap();
    let mut broken = lab.clone();
    broken.tasks[0].corpus.train.clear();
    let mixed = run_experiment_a(&broken, None).unwrap();
    assert_eq!(clean.records.len(), mixed.records.len());
    for (a, b) in clean.records.iter().zip(&mixed.records) {
        assert_eq!((&a.task, &a.arm), (&b.task, &b.arm));
        if b.task == "cipher" && b.arm != "baseline" {
            assert!(!b.ok(), "{} should have failed", b.arm);
        } else {
            assert_eq!(a, b, "{}/{}", a.task, a.arm);
        }
    }
    let table = mixed.file("experiment_a.csv").unwrap();
    assert!(table.lines().nth(1).unwrap().contains("error"), "{table}");
}

#[test]
fn experiment_b_reports_best_and_final() {
    let lab = Lab::new(&small_config()).unwrap();
    let run = run_experiment_b(&lab, None).unwrap();
    let arms: Vec<&str> = run.records.iter().map(|r| r.arm.as_str()).collect();
    assert_eq!(arms, ["baseline", "grpo", "grpo-final"]);
    let header = run.file("experiment_b.csv").unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "task,baseline,grpo,grpo-final");
    assert!(run.file("arms.csv").unwrap().contains("collapse_events"));
}

#[test]
fn kl_grid_of_one_matches_a_plain_run_and_beta_zero_has_no_kl() {
    let mut c = small_config();
    c.ablation.betas = vec![0.001];
    c.arms.sft_epochs.clear();
    let lab = Lab::new(&c).unwrap();
    let kl = run_kl_ablation(&lab, None).unwrap();
    let plain = run_experiment_a(&lab, None).unwrap();
    assert_eq!(kl.records[1].hypotheses, plain.records[1].hypotheses);
    assert_eq!(kl.records[1].chrf, plain.records[1].chrf);
    assert_eq!(kl.file("kl.csv").unwrap().lines().count(), 2);

    c.ablation.betas = vec![0.0];
    let lab = Lab::with_base(&c, lab.base.clone()).unwrap();
    let kl0 = run_kl_ablation(&lab, None).unwrap();
    assert_eq!(kl0.records[1].max_l_kl, Some(0.0));
}

#[test]
fn datasize_rejects_oversized_grids_and_shares_initial_adapters() {
    let mut c = small_config();
    c.ablation.sizes = vec![4, 13];
    let lab = Lab::new(&c).unwrap();
    assert!(run_datasize_ablation(&lab, None).is_err());
    let mut zero = small_config();
    zero.ablation.sizes = vec![0];
    assert!(zero.validate().is_err());
    c.ablation.sizes = vec![4, 12];
    c.grpo.steps = 0;
    c.sft.epochs = 0;
    let lab = Lab::with_base(&c, lab.base.clone()).unwrap();
    let run = run_datasize_ablation(&lab, None).unwrap();
    let h: Vec<_> = run.records.iter().map(|r| &r.hypotheses).collect();
    assert!(h.windows(2).all(|w| w[0] == w[1]));
    assert!(run.file("datasize.csv").is_some());
}

#[test]
fn decoding_control_lists_every_regime() {
    let mut c = small_config();
    c.decoding.regimes = vec![
        mtgrpo::eval::Decoding::Beam { width: 1 },
        mtgrpo::eval::Decoding::Greedy,
        mtgrpo::eval::Decoding::Sample { temperature: 1.2, seed: 1 },
    ];
    let lab = Lab::new(&c).unwrap();
    let run = run_decoding_control(&lab, None).unwrap();
    let beam1 = run.records.iter().find(|r| r.arm == "baseline-beam1").unwrap();
    let greedy = run.records.iter().find(|r| r.arm == "baseline-greedy").unwrap();
    assert_eq!(beam1.hypotheses, greedy.hypotheses);
    let csv = run.file("decoding.csv").unwrap();
    for regime in ["beam1", "greedy", "sample-t1.2", "beam2"] {
        assert!(csv.contains(regime), "{csv}");
    }
}

#[test]
fn forgetting_audit_covers_every_task() {
    let lab = Lab::new(&two_tasks()).unwrap();
    let run = run_forgetting(&lab, None).unwrap();
    let csv = run.file("forgetting.csv").unwrap();
    assert!(csv.contains("\ncipher,") && csv.contains("\nrev,"), "{csv}");
}

