//! chrF++: character n-grams of order 1-6 (whitespace removed) plus word
//! n-grams of order 1-2, F-score with β = 2 per order, averaged over orders.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricScore;

pub const CHAR_ORDER: usize = 6;
pub const WORD_ORDER: usize = 2;
pub const BETA: f64 = 2.0;

/// Matches, hypothesis n-grams and reference n-grams for one order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NgramCounts {
    pub matches: u64,
    pub hyp: u64,
    pub reference: u64,
}

impl NgramCounts {
    fn add(&mut self, o: &NgramCounts) {
        self.matches += o.matches;
        self.hyp += o.hyp;
        self.reference += o.reference;
    }

    /// F-score for this order, `None` when neither side has n-grams.
    pub fn f_score(&self, beta: f64) -> Option<f64> {
        if self.hyp == 0 && self.reference == 0 {
            return None;
        }
        let p = if self.hyp > 0 { self.matches as f64 / self.hyp as f64 } else { 0.0 };
        let r = if self.reference > 0 {
            self.matches as f64 / self.reference as f64
        } else {
            0.0
        };
        let b2 = beta * beta;
        let denom = b2 * p + r;
        Some(if denom > 0.0 { (1.0 + b2) * p * r / denom } else { 0.0 })
    }
}

/// Sufficient statistics of chrF++; sums over sentences give the corpus score.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChrfStats {
    pub chars: [NgramCounts; CHAR_ORDER],
    pub words: [NgramCounts; WORD_ORDER],
}

impl ChrfStats {
    pub fn add(&mut self, o: &ChrfStats) {
        for (a, b) in self.chars.iter_mut().zip(&o.chars) {
            a.add(b);
        }
        for (a, b) in self.words.iter_mut().zip(&o.words) {
            a.add(b);
        }
    }

    /// Score on the 0-100 scale. With no n-grams on either side at any
    /// order (both strings empty) the pair counts as identical.
    pub fn score(&self) -> f64 {
        let fs: Vec<f64> = self
            .chars
            .iter()
            .chain(&self.words)
            .filter_map(|c| c.f_score(BETA))
            .collect();
        if fs.is_empty() {
            return 100.0;
        }
        100.0 * fs.iter().sum::<f64>() / fs.len() as f64
    }
}

fn counts<T: Hash + Eq + Clone>(items: &[T], n: usize) -> HashMap<&[T], u64> {
    let mut m = HashMap::new();
    if items.len() >= n {
        for w in items.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

fn order_stats<T: Hash + Eq + Clone>(hyp: &[T], reference: &[T], n: usize) -> NgramCounts {
    let h = counts(hyp, n);
    let r = counts(reference, n);
    let matches = h
        .iter()
        .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
        .sum();
    NgramCounts {
        matches,
        hyp: h.values().sum(),
        reference: r.values().sum(),
    }
}

pub fn sentence_stats(hyp: &str, reference: &str) -> ChrfStats {
    let hc: Vec<char> = hyp.chars().filter(|c| !c.is_whitespace()).collect();
    let rc: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    let hw: Vec<&str> = hyp.split_whitespace().collect();
    let rw: Vec<&str> = reference.split_whitespace().collect();
    let mut s = ChrfStats::default();
    for n in 1..=CHAR_ORDER {
        s.chars[n - 1] = order_stats(&hc, &rc, n);
    }
    for n in 1..=WORD_ORDER {
        s.words[n - 1] = order_stats(&hw, &rw, n);
    }
    s
}

pub fn sentence_chrf(hyp: &str, reference: &str) -> f64 {
    sentence_stats(hyp, reference).score()
}

/// Per-sentence statistics for a corpus.
pub fn corpus_stats<S: AsRef<str>, R: AsRef<str>>(hyps: &[S], refs: &[R]) -> Result<Vec<ChrfStats>> {
    if hyps.len() != refs.len() {
        return Err(Error::LengthMismatch(hyps.len(), refs.len()));
    }
    Ok(hyps
        .iter()
        .zip(refs)
        .map(|(h, r)| sentence_stats(h.as_ref(), r.as_ref()))
        .collect())
}

/// Corpus chrF++ from a subset (with repetition) of per-sentence statistics.
pub fn score_indices(stats: &[ChrfStats], idx: &[usize]) -> f64 {
    let mut total = ChrfStats::default();
    for &i in idx {
        total.add(&stats[i]);
    }
    total.score()
}

pub fn chrf_pp<S: AsRef<str>, R: AsRef<str>>(hyps: &[S], refs: &[R]) -> Result<MetricScore> {
    let stats = corpus_stats(hyps, refs)?;
    let mut total = ChrfStats::default();
    for s in &stats {
        total.add(s);
    }
    Ok(MetricScore {
        name: "chrF++".into(),
        corpus: total.score(),
        sentences: stats.iter().map(ChrfStats::score).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_disjoint() {
        assert_eq!(sentence_chrf("abc de", "abc de"), 100.0);
        assert_eq!(sentence_chrf("xyz", "abc"), 0.0);
        assert_eq!(sentence_chrf("", "abc"), 0.0);
    }

    #[test]
    fn corpus_rejects_length_mismatch() {
        assert!(matches!(chrf_pp(&["a"], &["a", "b"]), Err(Error::LengthMismatch(1, 2))));
    }
}
