//! Source-sentence distribution and split corpus generation.

use std::collections::BTreeSet;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::task::{TaskSpec, SOURCE_ALPHABET};
use crate::error::{Error, Result};
use crate::rng;

/// A fixed "source language": a lexicon with Zipfian word frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceDistribution {
    pub lexicon_size: usize,
    pub word_len: (usize, usize),
    pub sentence_words: (usize, usize),
    pub zipf: f64,
    pub seed: u64,
}

impl Default for SourceDistribution {
    fn default() -> Self {
        SourceDistribution {
            lexicon_size: 300,
            word_len: (2, 6),
            sentence_words: (2, 6),
            zipf: 1.0,
            seed: 0x5eed,
        }
    }
}

impl SourceDistribution {
    fn validate(&self) -> Result<()> {
        let (a, b) = self.word_len;
        let (c, d) = self.sentence_words;
        if a == 0 || a > b || c == 0 || c > d || self.lexicon_size == 0 {
            return Err(Error::InvalidArgument(format!("invalid source distribution {self:?}")));
        }
        Ok(())
    }

    pub fn lexicon(&self) -> Vec<String> {
        let letters: Vec<char> = SOURCE_ALPHABET.chars().collect();
        let mut r = rng::stream(self.seed, &[rng::label("lexicon")]);
        let mut seen = BTreeSet::new();
        let mut words = Vec::with_capacity(self.lexicon_size);
        let mut attempts = 0;
        while words.len() < self.lexicon_size && attempts < 100 * self.lexicon_size {
            attempts += 1;
            let len = r.random_range(self.word_len.0..=self.word_len.1);
            let w: String = (0..len).map(|_| letters[r.random_range(0..letters.len())]).collect();
            if seen.insert(w.clone()) {
                words.push(w);
            }
        }
        words
    }

    /// Draws `n` distinct sentences.
    pub fn sample_sentences(&self, n: usize, seed: u64) -> Result<Vec<String>> {
        self.validate()?;
        let lex = self.lexicon();
        let weights: Vec<f64> = (1..=lex.len()).map(|k| 1.0 / (k as f64).powf(self.zipf)).collect();
        let dist = WeightedIndex::new(&weights).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut r = rng::stream(seed, &[rng::label("sentences")]);
        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(n);
        let mut attempts = 0;
        while out.len() < n {
            attempts += 1;
            if attempts > 50 * n + 1000 {
                return Err(Error::InfeasibleSplit(format!(
                    "could only draw {} distinct sentences of {n}",
                    out.len()
                )));
            }
            let k = r.random_range(self.sentence_words.0..=self.sentence_words.1);
            let s = (0..k).map(|_| lex[dist.sample(&mut r)].as_str()).collect::<Vec<_>>().join(" ");
            if seen.insert(s.clone()) {
                out.push(s);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pair {
    pub source: String,
    pub target: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSizes {
    pub eval: usize,
    pub devtest: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        SplitSizes {
            eval: 100,
            devtest: 200,
        }
    }
}

/// Train / eval-subset / devtest splits for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCorpus {
    pub task: TaskSpec,
    pub train: Vec<Pair>,
    pub eval: Vec<Pair>,
    pub devtest: Vec<Pair>,
    pub seed: u64,
}

impl SplitCorpus {
    /// Splits pairs after a seeded shuffle: eval first, then devtest, the
    /// rest is train.
    pub fn from_pairs(task: TaskSpec, mut pairs: Vec<Pair>, sizes: SplitSizes, seed: u64) -> Result<Self> {
        if pairs.len() < sizes.eval + sizes.devtest + 1 {
            return Err(Error::InfeasibleSplit(format!(
                "{} pairs cannot hold eval {} + devtest {} + at least one training pair",
                pairs.len(),
                sizes.eval,
                sizes.devtest
            )));
        }
        pairs.shuffle(&mut rng::stream(seed, &[rng::label("split")]));
        let train = pairs.split_off(sizes.eval + sizes.devtest);
        let devtest = pairs.split_off(sizes.eval);
        Ok(SplitCorpus {
            task,
            train,
            eval: pairs,
            devtest,
            seed,
        })
    }

    pub fn train_sources(&self) -> Vec<&str> {
        self.train.iter().map(|p| p.source.as_str()).collect()
    }

    /// First `n` training pairs (the data-size lever).
    pub fn truncate_train(&self, n: usize) -> Result<SplitCorpus> {
        if n == 0 || n > self.train.len() {
            return Err(Error::InvalidArgument(format!(
                "training size {n} outside 1..={}",
                self.train.len()
            )));
        }
        let mut c = self.clone();
        c.train.truncate(n);
        Ok(c)
    }
}

/// Generates `n_sentences` distinct sources from `dist` (with `words`
/// overriding its sentence-length range) and labels them with the task's
/// ground truth.
pub fn gen_corpus(
    task: &TaskSpec,
    dist: &SourceDistribution,
    n_sentences: usize,
    words: Option<(usize, usize)>,
    sizes: SplitSizes,
    seed: u64,
) -> Result<SplitCorpus> {
    if n_sentences < sizes.eval + sizes.devtest + 1 {
        return Err(Error::InfeasibleSplit(format!(
            "{n_sentences} sentences cannot hold eval {} + devtest {} + training",
            sizes.eval, sizes.devtest
        )));
    }
    let mut dist = dist.clone();
    if let Some(w) = words {
        dist.sentence_words = w;
    }
    let sources = dist.sample_sentences(n_sentences, seed)?;
    let pairs = sources
        .into_iter()
        .map(|s| {
            let target = task.transduce(&s);
            Pair { source: s, target }
        })
        .collect();
    SplitCorpus::from_pairs(task.clone(), pairs, sizes, seed)
}

const SPLITS: [&str; 3] = ["train", "eval", "devtest"];

#[derive(Serialize, Deserialize)]
struct CorpusMeta {
    task: TaskSpec,
    seed: u64,
}

fn write_tsv(path: &Path, pairs: &[Pair]) -> Result<()> {
    let mut text = String::new();
    for p in pairs {
        text.push_str(&p.source);
        text.push('\t');
        text.push_str(p.target.as_deref().unwrap_or(""));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `task.json`, one TSV per split and a `splits.txt` manifest.
pub fn write_corpus(dir: &Path, c: &SplitCorpus) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = serde_json::to_string_pretty(&CorpusMeta {
        task: c.task.clone(),
        seed: c.seed,
    })?;
    let p = dir.join("task.json");
    std::fs::write(&p, meta + "\n").map_err(|e| Error::io(&p, e))?;
    let mut manifest = String::new();
    for (name, pairs) in SPLITS.iter().zip([&c.train, &c.eval, &c.devtest]) {
        write_tsv(&dir.join(format!("{name}.tsv")), pairs)?;
        manifest.push_str(&format!("{name}.tsv\n"));
    }
    let p = dir.join("splits.txt");
    std::fs::write(&p, manifest).map_err(|e| Error::io(&p, e))
}

pub fn read_corpus(dir: &Path) -> Result<SplitCorpus> {
    let p = dir.join("task.json");
    let meta: CorpusMeta =
        serde_json::from_str(&std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?)?;
    let mut splits = Vec::new();
    for name in SPLITS {
        let path = dir.join(format!("{name}.tsv"));
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let pairs = text
            .lines()
            .map(|l| {
                let (s, t) = l.split_once('\t').unwrap_or((l, ""));
                Pair {
                    source: s.to_string(),
                    target: (!t.is_empty()).then(|| t.to_string()),
                }
            })
            .collect::<Vec<_>>();
        splits.push(pairs);
    }
    let devtest = splits.pop().unwrap();
    let eval = splits.pop().unwrap();
    let train = splits.pop().unwrap();
    Ok(SplitCorpus {
        task: meta.task,
        train,
        eval,
        devtest,
        seed: meta.seed,
    })
}
