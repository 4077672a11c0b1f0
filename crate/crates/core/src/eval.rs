//! Decoding a set of sources and scoring the outputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{bleu, chrf, BleuTokenizer, ChrfStats};
use crate::par;
use crate::policy::{sample_decode, PolicyView};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "kebab-case")]
pub enum Decoding {
    Beam { width: usize },
    Greedy,
    Sample { temperature: f64, seed: u64 },
}

impl Decoding {
    pub fn label(&self) -> String {
        match self {
            Decoding::Beam { width } => format!("beam{width}"),
            Decoding::Greedy => "greedy".into(),
            Decoding::Sample { temperature, .. } => format!("sample-t{temperature}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub hypotheses: Vec<String>,
    pub chrf: f64,
    pub bleu: f64,
    pub sentence_chrf: Vec<f64>,
    pub stats: Vec<ChrfStats>,
    pub unfinished: usize,
}

/// Decodes every source with `view` and scores against `references`.
pub fn evaluate(
    view: PolicyView<'_>,
    tag: &str,
    sources: &[&str],
    references: &[&str],
    decoding: Decoding,
    max_tokens: usize,
) -> Result<EvalResult> {
    if sources.len() != references.len() {
        return Err(Error::LengthMismatch(sources.len(), references.len()));
    }
    let model = view.model;
    let hyps = par::try_map_indexed(sources.len(), |i| {
        let prompt = model.prompt(tag, sources[i])?;
        match decoding {
            Decoding::Beam { width } => view.beam_decode(&prompt, width, max_tokens),
            Decoding::Greedy => view.greedy_decode(&prompt, max_tokens),
            Decoding::Sample { temperature, seed } => {
                let s = rng::derive_seed(seed, &[rng::label("eval-sample"), i as u64]);
                sample_decode(view, &prompt, temperature, max_tokens, s)
            }
        }
    })?;
    let unfinished = hyps.iter().filter(|h| !h.finished).count();
    let texts: Vec<String> = hyps.into_iter().map(|h| h.text).collect();
    let stats = chrf::corpus_stats(&texts, references)?;
    let mut total = ChrfStats::default();
    for s in &stats {
        total.add(s);
    }
    Ok(EvalResult {
        chrf: total.score(),
        bleu: bleu(&texts, references, BleuTokenizer::Whitespace)?.corpus,
        sentence_chrf: stats.iter().map(ChrfStats::score).collect(),
        stats,
        hypotheses: texts,
        unfinished,
    })
}
