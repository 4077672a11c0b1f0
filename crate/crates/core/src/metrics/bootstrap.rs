//! Paired bootstrap resampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    /// Corpus-level B minus corpus-level A.
    pub delta: f64,
    /// Fraction of resamples where B does not beat A.
    pub p_value: f64,
    pub n_resamples: usize,
    pub seed: u64,
}

impl SignificanceResult {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// Resampled index set `r` of size `n`; each resample has its own stream so
/// the result does not depend on thread count.
pub fn resample_indices(n: usize, seed: u64, r: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Bootstrap with caller-supplied corpus aggregators over index multisets.
pub fn paired_bootstrap_by<FA, FB>(
    n: usize,
    corpus_a: FA,
    corpus_b: FB,
    n_resamples: usize,
    seed: u64,
) -> Result<SignificanceResult>
where
    FA: Fn(&[usize]) -> f64 + Sync,
    FB: Fn(&[usize]) -> f64 + Sync,
{
    if n < 2 {
        return Err(Error::SampleSize(format!("paired bootstrap needs at least 2 items, got {n}")));
    }
    if n_resamples == 0 {
        return Err(Error::InvalidArgument("n_resamples must be positive".into()));
    }
    let all: Vec<usize> = (0..n).collect();
    let delta = corpus_b(&all) - corpus_a(&all);
    let losses = par::map_indexed(n_resamples, |r| {
        let idx = resample_indices(n, seed, r);
        usize::from(corpus_b(&idx) <= corpus_a(&idx))
    });
    Ok(SignificanceResult {
        delta,
        p_value: losses.iter().sum::<usize>() as f64 / n_resamples as f64,
        n_resamples,
        seed,
    })
}

fn mean_at(xs: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| xs[i]).sum::<f64>() / idx.len() as f64
}

/// Paired bootstrap on per-sentence scores with the mean as corpus score.
pub fn paired_bootstrap(a: &[f64], b: &[f64], n_resamples: usize, seed: u64) -> Result<SignificanceResult> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    paired_bootstrap_by(a.len(), |i| mean_at(a, i), |i| mean_at(b, i), n_resamples, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_dominance() {
        let a: Vec<f64> = (0..20).map(|i| (i as f64 * 0.7).sin() * 10.0 + 40.0).collect();
        let same = paired_bootstrap(&a, &a, 1000, 1).unwrap();
        assert_eq!(same.delta, 0.0);
        assert!(same.p_value >= 0.05);
        let b: Vec<f64> = a.iter().map(|x| x + 10.0).collect();
        assert!(paired_bootstrap(&a, &b, 1000, 1).unwrap().p_value < 0.001);
    }

    #[test]
    fn deterministic_under_seed() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [1.5, 1.0, 3.5, 4.2];
        assert_eq!(
            paired_bootstrap(&a, &b, 500, 9).unwrap(),
            paired_bootstrap(&a, &b, 500, 9).unwrap()
        );
    }
}
