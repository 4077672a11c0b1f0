//! Pearson and Spearman correlation.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Largest sample for which the Spearman p-value is an exact permutation test.
pub const EXACT_PERMUTATION_MAX_N: usize = 10;

fn check(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 3 {
        return Err(Error::SampleSize(format!("correlation needs at least 3 pairs, got {}", xs.len())));
    }
    Ok(())
}

fn constant(v: &[f64]) -> bool {
    v.iter().all(|x| *x == v[0])
}

fn pearson_raw(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if constant(xs) || constant(ys) {
        return Err(Error::UndefinedCorrelation("constant input".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance in one input".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check(xs, ys)?;
    pearson_raw(xs, ys)
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PValueMethod {
    ExactPermutation,
    StudentT,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spearman {
    pub rho: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    pub n: usize,
    pub method: PValueMethod,
}

/// Visits every permutation of `v` (Heap's algorithm).
fn for_each_permutation(v: &mut [f64], f: &mut impl FnMut(&[f64])) {
    let n = v.len();
    let mut c = vec![0usize; n];
    f(v);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                v.swap(0, i);
            } else {
                v.swap(c[i], i);
            }
            f(v);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<Spearman> {
    check(xs, ys)?;
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let rho = pearson_raw(&rx, &ry)?;
    let n = xs.len();
    if n <= EXACT_PERMUTATION_MAX_N {
        let n_f = n as f64;
        let mx = (n_f + 1.0) / 2.0;
        let dx: Vec<f64> = rx.iter().map(|r| r - mx).collect();
        let sxx: f64 = dx.iter().map(|d| d * d).sum();
        let syy: f64 = ry.iter().map(|r| (r - mx) * (r - mx)).sum();
        let norm = (sxx * syy).sqrt();
        let target = rho.abs() - 1e-12;
        let (mut hits, mut total) = (0u64, 0u64);
        let mut perm = ry.clone();
        for_each_permutation(&mut perm, &mut |p| {
            let s: f64 = dx.iter().zip(p).map(|(a, b)| a * (b - mx)).sum();
            total += 1;
            if (s / norm).abs() >= target {
                hits += 1;
            }
        });
        return Ok(Spearman {
            rho,
            p_value: hits as f64 / total as f64,
            n,
            method: PValueMethod::ExactPermutation,
        });
    }
    let df = (n - 2) as f64;
    let p_value = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
        (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
    };
    Ok(Spearman {
        rho,
        p_value,
        n,
        method: PValueMethod::StudentT,
    })
}
