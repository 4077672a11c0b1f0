//! Six-level quality cline and the reward discriminability diagnostic.

use std::io::Write;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::pearson;
use crate::reward::hybrid::{HybridReward, RewardBundle};
use crate::rng;

pub const CLINE_LEVELS: usize = 6;

/// Degradation strengths for ranks 2-5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DegradeConfig {
    pub word_drop: f64,
    pub char_noise: f64,
    pub truncate_keep: f64,
}

impl Default for DegradeConfig {
    fn default() -> Self {
        DegradeConfig {
            word_drop: 0.1,
            char_noise: 0.1,
            truncate_keep: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClineCandidate {
    pub rank: u8,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClineItem {
    pub id: usize,
    pub source: String,
    pub reference: String,
    pub candidates: Vec<ClineCandidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityCline {
    pub items: Vec<ClineItem>,
}

fn drop_words(words: &mut Vec<String>, frac: f64, r: &mut impl Rng) {
    if words.len() < 2 {
        return;
    }
    let n = ((frac * words.len() as f64).round() as usize).clamp(1, words.len() - 1);
    for _ in 0..n {
        let i = r.random_range(0..words.len());
        words.remove(i);
    }
}

fn swap_adjacent(words: &mut [String], r: &mut impl Rng) {
    if words.len() >= 2 {
        let i = r.random_range(0..words.len() - 1);
        words.swap(i, i + 1);
    } else if let Some(w) = words.first_mut() {
        let mut cs: Vec<char> = w.chars().collect();
        if cs.len() >= 2 {
            let i = r.random_range(0..cs.len() - 1);
            cs.swap(i, i + 1);
            *w = cs.into_iter().collect();
        }
    }
}

fn char_noise(text: &str, frac: f64, alphabet: &[char], r: &mut impl Rng) -> String {
    let mut cs: Vec<char> = text.chars().collect();
    let slots: Vec<usize> = (0..cs.len()).filter(|&i| cs[i] != ' ').collect();
    if slots.is_empty() {
        return text.to_string();
    }
    let n = ((frac * slots.len() as f64).round() as usize).max(1);
    for &i in slots.choose_multiple(r, n.min(slots.len())) {
        let orig = cs[i];
        loop {
            let c = alphabet[r.random_range(0..alphabet.len())];
            if c != orig || alphabet.len() == 1 {
                cs[i] = c;
                break;
            }
        }
    }
    cs.into_iter().collect()
}

fn truncate(text: &str, keep: f64) -> String {
    let cs: Vec<char> = text.chars().collect();
    let n = ((keep * cs.len() as f64).round() as usize).clamp(1, cs.len().max(1));
    cs.into_iter().take(n).collect::<String>().trim_end().to_string()
}

/// Builds a cline from `(source, reference)` pairs: rank 1 is the reference,
/// ranks 2-5 stack word drop, adjacent swap, character noise and truncation,
/// rank 6 is the shuffled characters of an unrelated reference.
pub fn build_quality_cline(
    pairs: &[(String, String)],
    n_sentences: usize,
    seed: u64,
    cfg: &DegradeConfig,
) -> Result<QualityCline> {
    if n_sentences == 0 || n_sentences > pairs.len() {
        return Err(Error::InvalidArgument(format!(
            "cline needs 1..={} sentences, asked for {n_sentences}",
            pairs.len()
        )));
    }
    if pairs.len() < 2 {
        return Err(Error::InvalidArgument("cline needs at least two references".into()));
    }
    let mut alphabet: Vec<char> = pairs
        .iter()
        .flat_map(|(_, r)| r.chars())
        .filter(|c| *c != ' ')
        .collect();
    alphabet.sort_unstable();
    alphabet.dedup();
    let mut items = Vec::with_capacity(n_sentences);
    for (id, (source, reference)) in pairs.iter().take(n_sentences).enumerate() {
        if reference.trim().is_empty() {
            return Err(Error::InvalidArgument(format!("empty reference for sentence {id}")));
        }
        let mut r = rng::stream(seed, &[rng::label("cline"), id as u64]);
        let mut words: Vec<String> = reference.split_whitespace().map(str::to_string).collect();
        let mut cands = vec![reference.clone()];
        drop_words(&mut words, cfg.word_drop, &mut r);
        cands.push(words.join(" "));
        swap_adjacent(&mut words, &mut r);
        cands.push(words.join(" "));
        let noisy = char_noise(&words.join(" "), cfg.char_noise, &alphabet, &mut r);
        cands.push(noisy.clone());
        cands.push(truncate(&noisy, cfg.truncate_keep));
        let other = (id + 1 + r.random_range(0..pairs.len() - 1)) % pairs.len();
        let mut chars: Vec<char> = pairs[other].1.chars().collect();
        chars.shuffle(&mut r);
        cands.push(chars.into_iter().collect::<String>().trim().to_string());
        items.push(ClineItem {
            id,
            source: source.clone(),
            reference: reference.clone(),
            candidates: cands
                .into_iter()
                .enumerate()
                .map(|(i, text)| ClineCandidate {
                    rank: (i + 1) as u8,
                    text,
                })
                .collect(),
        });
    }
    Ok(QualityCline { items })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClineScore {
    pub id: usize,
    pub rank: u8,
    pub bundle: RewardBundle,
}

pub fn score_cline(cline: &QualityCline, reward: &HybridReward) -> Result<Vec<ClineScore>> {
    let mut out = Vec::new();
    for item in &cline.items {
        for c in &item.candidates {
            out.push(ClineScore {
                id: item.id,
                rank: c.rank,
                bundle: reward.bundle(&item.source, &c.text)?,
            });
        }
    }
    Ok(out)
}

/// Pearson r between hybrid score and rank, pooled over all sentences.
pub fn discriminability_of(scores: &[ClineScore]) -> Result<f64> {
    let s: Vec<f64> = scores.iter().map(|c| c.bundle.hybrid).collect();
    let r: Vec<f64> = scores.iter().map(|c| c.rank as f64).collect();
    pearson(&s, &r)
}

pub fn discriminability(cline: &QualityCline, reward: &HybridReward) -> Result<f64> {
    discriminability_of(&score_cline(cline, reward)?)
}

/// CSV with sentence id, rank, every component score and the hybrid score.
pub fn write_cline_csv(path: &Path, scores: &[ClineScore]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::from("sentence_id,rank");
    if let Some(first) = scores.first() {
        for n in &first.bundle.names {
            text.push(',');
            text.push_str(n);
        }
    }
    text.push_str(",hybrid\n");
    for s in scores {
        text.push_str(&format!("{},{}", s.id, s.rank));
        for v in &s.bundle.scores {
            text.push_str(&format!(",{v:.6}"));
        }
        text.push_str(&format!(",{:.6}\n", s.bundle.hybrid));
    }
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs() -> Vec<(String, String)> {
        ["ab cd ef gh", "ij kl mn", "op qr st uv wx", "yz ab cd"]
            .iter()
            .map(|s| (s.to_string(), s.chars().rev().collect()))
            .collect()
    }

    #[test]
    fn ranks_and_reference() {
        let c = build_quality_cline(&pairs(), 3, 1, &DegradeConfig::default()).unwrap();
        assert_eq!(c.items.len(), 3);
        for it in &c.items {
            let ranks: Vec<u8> = it.candidates.iter().map(|c| c.rank).collect();
            assert_eq!(ranks, vec![1, 2, 3, 4, 5, 6]);
            assert_eq!(it.candidates[0].text, it.reference);
        }
        assert_eq!(c, build_quality_cline(&pairs(), 3, 1, &DegradeConfig::default()).unwrap());
    }

    #[test]
    fn rejects_empty_reference() {
        let mut p = pairs();
        p[0].1 = " ".into();
        assert!(build_quality_cline(&p, 2, 1, &DegradeConfig::default()).is_err());
    }
}
