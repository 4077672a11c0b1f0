//! Corpus BLEU: clipped 1-4 gram precisions, geometric mean, brevity
//! penalty, no smoothing.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricScore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BleuTokenizer {
    #[default]
    Whitespace,
    Char,
}

impl std::str::FromStr for BleuTokenizer {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "whitespace" => Ok(Self::Whitespace),
            "char" => Ok(Self::Char),
            o => Err(format!("unknown BLEU tokenizer `{o}`")),
        }
    }
}

const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuStats {
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl BleuStats {
    fn add(&mut self, o: &BleuStats) {
        for n in 0..MAX_ORDER {
            self.matches[n] += o.matches[n];
            self.totals[n] += o.totals[n];
        }
        self.hyp_len += o.hyp_len;
        self.ref_len += o.ref_len;
    }

    pub fn score(&self) -> f64 {
        if self.hyp_len == 0 || self.matches.iter().any(|&m| m == 0) {
            return 0.0;
        }
        let log_p: f64 = (0..MAX_ORDER)
            .map(|n| (self.matches[n] as f64 / self.totals[n] as f64).ln())
            .sum::<f64>()
            / MAX_ORDER as f64;
        let bp = if self.hyp_len > self.ref_len {
            1.0
        } else {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        };
        100.0 * bp * log_p.exp()
    }
}

fn tokens(s: &str, tok: BleuTokenizer) -> Vec<String> {
    match tok {
        BleuTokenizer::Whitespace => s.split_whitespace().map(str::to_string).collect(),
        BleuTokenizer::Char => s
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| c.to_string())
            .collect(),
    }
}

pub fn sentence_stats(hyp: &str, reference: &str, tok: BleuTokenizer) -> BleuStats {
    let h = tokens(hyp, tok);
    let r = tokens(reference, tok);
    let mut s = BleuStats {
        hyp_len: h.len() as u64,
        ref_len: r.len() as u64,
        ..BleuStats::default()
    };
    for n in 1..=MAX_ORDER {
        if h.len() < n {
            continue;
        }
        let mut rc: HashMap<&[String], u64> = HashMap::new();
        if r.len() >= n {
            for g in r.windows(n) {
                *rc.entry(g).or_insert(0) += 1;
            }
        }
        let mut hc: HashMap<&[String], u64> = HashMap::new();
        for g in h.windows(n) {
            *hc.entry(g).or_insert(0) += 1;
        }
        s.totals[n - 1] = (h.len() + 1 - n) as u64;
        s.matches[n - 1] = hc
            .iter()
            .map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0)))
            .sum();
    }
    s
}

pub fn bleu<S: AsRef<str>, R: AsRef<str>>(hyps: &[S], refs: &[R], tok: BleuTokenizer) -> Result<MetricScore> {
    if hyps.len() != refs.len() {
        return Err(Error::LengthMismatch(hyps.len(), refs.len()));
    }
    let stats: Vec<BleuStats> = hyps
        .iter()
        .zip(refs)
        .map(|(h, r)| sentence_stats(h.as_ref(), r.as_ref(), tok))
        .collect();
    let mut total = BleuStats::default();
    for s in &stats {
        total.add(s);
    }
    Ok(MetricScore {
        name: "BLEU".into(),
        corpus: total.score(),
        sentences: stats.iter().map(BleuStats::score).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_disjoint_and_brevity() {
        let refs = ["the cat sat on the mat"];
        assert!((bleu(&refs, &refs, BleuTokenizer::Whitespace).unwrap().corpus - 100.0).abs() < 1e-12);
        assert_eq!(bleu(&["x y z w"], &refs, BleuTokenizer::Whitespace).unwrap().corpus, 0.0);
        // full precision, 4 of 6 tokens
        let b = bleu(&["the cat sat on"], &refs, BleuTokenizer::Whitespace).unwrap().corpus;
        assert!((b - 100.0 * (1.0f64 - 6.0 / 4.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn char_mode_splits_characters() {
        let b = bleu(&["abcd"], &["a b c d"], BleuTokenizer::Char).unwrap().corpus;
        assert!((b - 100.0).abs() < 1e-12);
    }
}
