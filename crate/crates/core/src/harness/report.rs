//! Report tables. Every report is a pure function of the persisted arm
//! records and the run manifest, so it can be rebuilt byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::StatsConfig;
use crate::harness::headroom::{headroom_analysis, Correlation, HeadroomReport, HeadroomRow};
use crate::harness::lab::ArmRecord;
use crate::metrics::chrf::score_indices;
use crate::metrics::{forgetting_audit, paired_bootstrap_by, ForgettingReport, SignificanceResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    ExperimentA,
    ExperimentB,
    KlAblation,
    DatasizeAblation,
    DecodingControl,
    Headroom,
    Forgetting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: ExperimentKind,
    pub stats: StatsConfig,
    /// Record paths relative to the run directory, in report order.
    pub records: Vec<String>,
    #[serde(default)]
    pub exclude: Vec<String>,
    #[serde(default)]
    pub forgetting_threshold: f64,
}

pub const MANIFEST: &str = "manifest.json";

/// Output files of a report: `(file name, contents)`.
pub type ReportFiles = Vec<(String, String)>;

pub fn significance(base: &ArmRecord, sys: &ArmRecord, stats: &StatsConfig) -> Result<SignificanceResult> {
    if base.stats.len() != sys.stats.len() {
        return Err(Error::LengthMismatch(base.stats.len(), sys.stats.len()));
    }
    paired_bootstrap_by(
        base.stats.len(),
        |i| score_indices(&base.stats, i),
        |i| score_indices(&sys.stats, i),
        stats.bootstrap_resamples,
        stats.bootstrap_seed,
    )
}

fn marker(delta: f64, p: f64, alpha: f64) -> String {
    format!("{delta:+.2}{}", if p < alpha { "*" } else { "" })
}

fn by_task(records: &[ArmRecord]) -> Vec<(String, Vec<&ArmRecord>)> {
    let mut out: Vec<(String, Vec<&ArmRecord>)> = Vec::new();
    for r in records {
        match out.iter_mut().find(|(t, _)| *t == r.task) {
            Some((_, v)) => v.push(r),
            None => out.push((r.task.clone(), vec![r])),
        }
    }
    out
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Per-arm comparison against the `baseline` arm of the same task.
#[derive(Debug, Clone)]
pub struct ArmRow<'a> {
    pub record: &'a ArmRecord,
    pub baseline: Option<&'a ArmRecord>,
    pub sig: Option<SignificanceResult>,
}

pub fn compare_to_baseline<'a>(records: &'a [ArmRecord], stats: &StatsConfig) -> Result<Vec<ArmRow<'a>>> {
    let mut rows = Vec::new();
    for (_, recs) in by_task(records) {
        let base = recs.iter().copied().find(|r| r.arm == "baseline" && r.ok());
        for r in recs {
            let sig = match base {
                Some(b) if r.ok() && r.arm != "baseline" => Some(significance(b, r, stats)?),
                _ => None,
            };
            rows.push(ArmRow {
                record: r,
                baseline: base,
                sig,
            });
        }
    }
    Ok(rows)
}

fn long_table(rows: &[ArmRow<'_>], alpha: f64) -> String {
    let mut s = String::from(
        "task,arm,decoding,param,chrf,bleu,delta,p_value,significant,best_step,steps,collapse_events,max_l_kl,error\n",
    );
    for r in rows {
        let rec = r.record;
        let (delta, p, sig) = match &r.sig {
            Some(g) => (format!("{:.4}", g.delta), format!("{:.4}", g.p_value), (g.p_value < alpha).to_string()),
            None => Default::default(),
        };
        let (chrf, bleu) = if rec.ok() {
            (format!("{:.4}", rec.chrf), format!("{:.4}", rec.bleu))
        } else {
            Default::default()
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            csv_field(&rec.task),
            csv_field(&rec.arm),
            csv_field(&rec.decoding),
            opt(rec.param),
            chrf,
            bleu,
            delta,
            p,
            sig,
            opt(rec.best_step),
            opt(rec.steps),
            rec.collapse_events,
            opt(rec.max_l_kl.map(|v| format!("{v:.6}"))),
            csv_field(rec.error.as_deref().unwrap_or("")),
        );
    }
    s
}

/// Wide table: one row per task, the baseline score and one delta column
/// per arm with `*` marking `p < alpha`.
fn wide_table(rows: &[ArmRow<'_>], alpha: f64) -> String {
    let mut arms: Vec<&str> = Vec::new();
    for r in rows {
        if r.record.arm != "baseline" && !arms.contains(&r.record.arm.as_str()) {
            arms.push(&r.record.arm);
        }
    }
    let mut s = String::from("task,baseline");
    for a in &arms {
        s.push(',');
        s.push_str(&csv_field(a));
    }
    s.push('\n');
    let mut tasks: Vec<&str> = Vec::new();
    for r in rows {
        if !tasks.contains(&r.record.task.as_str()) {
            tasks.push(&r.record.task);
        }
    }
    for t in tasks {
        let of_task: Vec<&ArmRow<'_>> = rows.iter().filter(|r| r.record.task == t).collect();
        let base = of_task
            .first()
            .and_then(|r| r.baseline)
            .map(|b| format!("{:.2}", b.chrf))
            .unwrap_or_else(|| "error".into());
        s.push_str(&csv_field(t));
        s.push(',');
        s.push_str(&base);
        for a in &arms {
            s.push(',');
            let cell = match of_task.iter().find(|r| r.record.arm == *a) {
                Some(r) if !r.record.ok() => "error".to_string(),
                Some(r) => r.sig.as_ref().map(|g| marker(g.delta, g.p_value, alpha)).unwrap_or_default(),
                None => String::new(),
            };
            s.push_str(&cell);
        }
        s.push('\n');
    }
    s
}

fn arm_summary(title: &str, rows: &[ArmRow<'_>], stats: &StatsConfig) -> String {
    let mut s = format!(
        "{title}\nbootstrap: {} resamples, seed {}, alpha {}\n\n",
        stats.bootstrap_resamples, stats.bootstrap_seed, stats.alpha
    );
    for r in rows {
        let rec = r.record;
        if let Some(e) = &rec.error {
            let _ = writeln!(s, "{:<12} {:<18} failed: {e}", rec.task, rec.arm);
            continue;
        }
        let _ = write!(s, "{:<12} {:<18} chrF++ {:>6.2}", rec.task, rec.arm, rec.chrf);
        if let Some(g) = &r.sig {
            let _ = write!(s, "  delta {}  p {:.4}", marker(g.delta, g.p_value, stats.alpha), g.p_value);
        }
        if rec.collapse_events > 0 {
            let _ = write!(s, "  collapse events {}", rec.collapse_events);
        }
        s.push('\n');
    }
    s
}

fn arms_report(title: &str, table: &str, records: &[ArmRecord], stats: &StatsConfig) -> Result<ReportFiles> {
    let rows = compare_to_baseline(records, stats)?;
    Ok(vec![
        (format!("{table}.csv"), wide_table(&rows, stats.alpha)),
        ("arms.csv".into(), long_table(&rows, stats.alpha)),
        ("summary.txt".into(), arm_summary(title, &rows, stats)),
    ])
}

fn kl_report(records: &[ArmRecord], stats: &StatsConfig) -> Result<ReportFiles> {
    let rows = compare_to_baseline(records, stats)?;
    let mut files = arms_report("KL coefficient ablation", "kl_table", records, stats)?;
    let mut s = String::from("task,beta,chrf,delta,p_value,max_l_kl\n");
    let mut spread: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.record.param.is_some() && r.record.ok()) {
        let rec = r.record;
        let g = r.sig.as_ref();
        let _ = writeln!(
            s,
            "{},{},{:.4},{},{},{}",
            csv_field(&rec.task),
            rec.param.unwrap(),
            rec.chrf,
            g.map(|g| format!("{:.4}", g.delta)).unwrap_or_default(),
            g.map(|g| format!("{:.4}", g.p_value)).unwrap_or_default(),
            opt(rec.max_l_kl.map(|v| format!("{v:.6}")))
        );
        let e = spread.entry(rec.task.as_str()).or_insert((f64::INFINITY, f64::NEG_INFINITY));
        e.0 = e.0.min(rec.chrf);
        e.1 = e.1.max(rec.chrf);
    }
    let mut summary = files.pop().unwrap().1;
    summary.push('\n');
    for (t, (lo, hi)) in &spread {
        let _ = writeln!(summary, "{t}: best chrF++ spread across beta {:.2}", hi - lo);
    }
    files.push(("summary.txt".into(), summary));
    files.push(("kl.csv".into(), s));
    Ok(files)
}

fn decoding_report(records: &[ArmRecord]) -> Result<ReportFiles> {
    let mut s = String::from("task,system,regime,chrf,delta_vs_baseline_beam\n");
    let mut summary = String::from("Decoding-regime control\n\n");
    for (task, recs) in by_task(records) {
        let beam = recs
            .iter()
            .find(|r| r.arm == "baseline" && r.ok())
            .map(|r| r.chrf);
        let mut max_regime_gain = f64::NEG_INFINITY;
        let mut grpo_gain = None;
        for r in recs.iter().filter(|r| r.ok() && r.arm != "baseline") {
            let system = if r.arm.starts_with("baseline-") { "baseline" } else { r.arm.as_str() };
            let d = beam.map(|b| r.chrf - b);
            let _ = writeln!(
                s,
                "{},{},{},{:.4},{}",
                csv_field(&task),
                csv_field(system),
                csv_field(&r.decoding),
                r.chrf,
                d.map(|d| format!("{d:.4}")).unwrap_or_default()
            );
            if let Some(d) = d {
                if system == "baseline" {
                    max_regime_gain = max_regime_gain.max(d);
                } else {
                    grpo_gain = Some(d);
                }
            }
        }
        let _ = writeln!(
            summary,
            "{task}: grpo gain {}  largest decoding-regime gain {:.2}  grpo exceeds regime effect: {}",
            grpo_gain.map(|g| format!("{g:+.2}")).unwrap_or_else(|| "n/a".into()),
            max_regime_gain,
            grpo_gain.map(|g| g > max_regime_gain).unwrap_or(false)
        );
    }
    Ok(vec![("decoding.csv".into(), s), ("summary.txt".into(), summary)])
}

pub fn headroom_rows(records: &[ArmRecord], arm: &str) -> Vec<HeadroomRow> {
    by_task(records)
        .into_iter()
        .filter_map(|(task, recs)| {
            let b = recs.iter().find(|r| r.arm == "baseline" && r.ok())?;
            let g = recs.iter().find(|r| r.arm == arm && r.ok())?;
            Some(HeadroomRow {
                task,
                baseline: b.chrf,
                delta: g.chrf - b.chrf,
            })
        })
        .collect()
}

fn correlation_text(label: &str, c: &Correlation, alpha: f64) -> String {
    let mut s = format!(
        "{label} (n={}): rho = {:.4}, p = {:.4} ({:?})\n  leave-one-out rho range [{:.4}, {:.4}], {} of {} folds with p < {alpha}\n",
        c.n,
        c.rho,
        c.p_value,
        c.method,
        c.loo_min,
        c.loo_max,
        c.loo_significant,
        c.loo.len()
    );
    for f in &c.loo {
        let _ = writeln!(s, "    without {:<10} rho {:.4}  p {:.4}", f.left_out, f.rho, f.p_value);
    }
    s
}

pub fn headroom_text(r: &HeadroomReport) -> String {
    let mut s = String::from("Spearman correlation, baseline chrF++ vs delta chrF++\n");
    s.push_str(&correlation_text("full", &r.full, r.alpha));
    if let Some(e) = &r.excluded {
        s.push_str(&correlation_text(&format!("excluding {}", r.excluded_tasks.join(", ")), e, r.alpha));
    }
    s
}

pub fn headroom_csv(rows: &[HeadroomRow]) -> String {
    let mut s = String::from("task,baseline,delta\n");
    for r in rows {
        let _ = writeln!(s, "{},{:.4},{:.4}", csv_field(&r.task), r.baseline, r.delta);
    }
    s
}

fn headroom_report(records: &[ArmRecord], m: &Manifest) -> Result<ReportFiles> {
    let mut files = arms_report("Headroom runs", "headroom_table", records, &m.stats)?;
    let rows = headroom_rows(records, "grpo");
    files.push(("headroom.csv".into(), headroom_csv(&rows)));
    let text = match headroom_analysis(&rows, &m.exclude, m.stats.alpha) {
        Ok(r) => headroom_text(&r),
        Err(e) => format!("headroom analysis unavailable: {e}\n"),
    };
    files.push(("headroom.txt".into(), text));
    Ok(files)
}

/// Audit from `baseline` (adapters off) and `adapted` records per task.
pub fn forgetting_from_records(records: &[ArmRecord], threshold: f64) -> Result<ForgettingReport> {
    let mut scores = BTreeMap::new();
    let mut base = BTreeMap::new();
    for r in records.iter().filter(|r| r.ok()) {
        match r.arm.as_str() {
            "baseline" => {
                base.insert(r.task.clone(), r.chrf);
            }
            "adapted" => {
                scores.insert(r.task.clone(), r.chrf);
            }
            _ => {}
        }
    }
    forgetting_audit(&scores, &base, threshold)
}

fn forgetting_report(records: &[ArmRecord], m: &Manifest) -> Result<ReportFiles> {
    let rep = forgetting_from_records(records, m.forgetting_threshold)?;
    let mut s = String::from("task,delta,event\n");
    for (t, d) in &rep.deltas {
        let _ = writeln!(s, "{},{:.4},{}", csv_field(t), d, rep.events.iter().any(|e| &e.task == t));
    }
    let mut summary = format!(
        "Forgetting audit, threshold {} chrF++\n{} event(s)\n",
        rep.threshold,
        rep.events.len()
    );
    for e in &rep.events {
        let _ = writeln!(summary, "  {}: {:.2} -> {:.2} ({:+.2})", e.task, e.baseline, e.score, e.delta);
    }
    Ok(vec![("forgetting.csv".into(), s), ("summary.txt".into(), summary)])
}

/// Builds the report files of a run from its manifest and records.
pub fn build_report(m: &Manifest, records: &[ArmRecord]) -> Result<ReportFiles> {
    match m.experiment {
        ExperimentKind::ExperimentA => arms_report("Experiment A: baseline, SFT and GRPO", "experiment_a", records, &m.stats),
        ExperimentKind::ExperimentB => arms_report(
            "Experiment B: GRPO on out-of-domain sources (best and final checkpoints)",
            "experiment_b",
            records,
            &m.stats,
        ),
        ExperimentKind::KlAblation => kl_report(records, &m.stats),
        ExperimentKind::DatasizeAblation => arms_report("Training-size ablation", "datasize", records, &m.stats),
        ExperimentKind::DecodingControl => decoding_report(records),
        ExperimentKind::Headroom => headroom_report(records, m),
        ExperimentKind::Forgetting => forgetting_report(records, m),
    }
}

pub fn load_run(dir: &Path) -> Result<(Manifest, Vec<ArmRecord>)> {
    let mp = dir.join(MANIFEST);
    let text = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    let m: Manifest = serde_json::from_str(&text)?;
    let recs = m
        .records
        .iter()
        .map(|r| ArmRecord::load(&dir.join(r)))
        .collect::<Result<Vec<_>>>()?;
    Ok((m, recs))
}

/// Rebuilds the report of a persisted run.
pub fn regenerate(dir: &Path) -> Result<ReportFiles> {
    let (m, recs) = load_run(dir)?;
    build_report(&m, &recs)
}

pub fn write_files(dir: &Path, files: &ReportFiles) -> Result<()> {
    for (name, text) in files {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}
