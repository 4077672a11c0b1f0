//! Baseline-versus-gain correlation with leave-one-out stability.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{spearman, headroom_fixture, PValueMethod};

pub const MIN_TASKS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadroomRow {
    pub task: String,
    pub baseline: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooFold {
    pub left_out: String,
    pub rho: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub n: usize,
    pub rho: f64,
    pub p_value: f64,
    pub method: PValueMethod,
    pub loo: Vec<LooFold>,
    pub loo_min: f64,
    pub loo_max: f64,
    /// Folds with `p < alpha`.
    pub loo_significant: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadroomReport {
    pub alpha: f64,
    pub full: Correlation,
    pub excluded_tasks: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excluded: Option<Correlation>,
}

fn correlate(rows: &[&HeadroomRow], alpha: f64) -> Result<Correlation> {
    let xs: Vec<f64> = rows.iter().map(|r| r.baseline).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.delta).collect();
    let s = spearman(&xs, &ys)?;
    let mut loo = Vec::with_capacity(rows.len());
    for i in 0..rows.len() {
        let keep = |v: &[f64]| -> Vec<f64> { v.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, x)| *x).collect() };
        let f = spearman(&keep(&xs), &keep(&ys))?;
        loo.push(LooFold {
            left_out: rows[i].task.clone(),
            rho: f.rho,
            p_value: f.p_value,
        });
    }
    Ok(Correlation {
        n: s.n,
        rho: s.rho,
        p_value: s.p_value,
        method: s.method,
        loo_min: loo.iter().map(|f| f.rho).fold(f64::INFINITY, f64::min),
        loo_max: loo.iter().map(|f| f.rho).fold(f64::NEG_INFINITY, f64::max),
        loo_significant: loo.iter().filter(|f| f.p_value < alpha).count(),
        loo,
    })
}

/// Spearman correlation between baseline quality and gain over all rows,
/// and again without the `exclude` tasks.
pub fn headroom_analysis(rows: &[HeadroomRow], exclude: &[String], alpha: f64) -> Result<HeadroomReport> {
    if rows.len() < MIN_TASKS {
        return Err(Error::SampleSize(format!(
            "headroom analysis needs at least {MIN_TASKS} tasks, got {}",
            rows.len()
        )));
    }
    for e in exclude {
        if !rows.iter().any(|r| &r.task == e) {
            return Err(Error::InvalidArgument(format!("excluded task `{e}` has no row")));
        }
    }
    let all: Vec<&HeadroomRow> = rows.iter().collect();
    let full = correlate(&all, alpha)?;
    let excluded = if exclude.is_empty() {
        None
    } else {
        let kept: Vec<&HeadroomRow> = rows.iter().filter(|r| !exclude.contains(&r.task)).collect();
        Some(correlate(&kept, alpha)?)
    };
    Ok(HeadroomReport {
        alpha,
        full,
        excluded_tasks: exclude.to_vec(),
        excluded,
    })
}

/// Rows of the built-in fixture and its flagged languages.
pub fn fixture_rows() -> (Vec<HeadroomRow>, Vec<String>) {
    let t = headroom_fixture();
    let rows = t
        .iter()
        .map(|r| HeadroomRow {
            task: r.language.clone(),
            baseline: r.baseline_chrf,
            delta: r.delta_chrf,
        })
        .collect();
    let flagged = t.iter().filter(|r| r.flagged != 0).map(|r| r.language.clone()).collect();
    (rows, flagged)
}
