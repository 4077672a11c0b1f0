//! Synthetic transduction tasks: the hidden "translation" functions that
//! stand in for target languages.

use serde::{Deserialize, Serialize};

use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransductionKind {
    SubstitutionCipher,
    VocabularyMap,
    Reversal,
    SuffixingComposite,
}

impl std::str::FromStr for TransductionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "substitution-cipher" | "cipher" => Ok(Self::SubstitutionCipher),
            "vocabulary-map" | "vocab" => Ok(Self::VocabularyMap),
            "reversal" => Ok(Self::Reversal),
            "suffixing-composite" | "suffixing" => Ok(Self::SuffixingComposite),
            other => Err(format!("unknown transduction kind `{other}`")),
        }
    }
}

/// Difficulty knobs. `level` in `[0, 1]` controls how far the mapping is
/// from the identity; 0 is always the identity function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Difficulty {
    pub level: f64,
    /// Letters eligible for substitution (prefix of the source alphabet).
    pub alphabet_size: usize,
    pub suffix_count: usize,
    /// Fraction of words that get an irregular (shifted) mapping.
    pub noise_rate: f64,
}

impl Default for Difficulty {
    fn default() -> Self {
        Difficulty {
            level: 1.0,
            alphabet_size: 26,
            suffix_count: 3,
            noise_rate: 0.0,
        }
    }
}

pub const SOURCE_ALPHABET: &str = "abcdefghijklmnopqrstuvwxyz";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transduction {
    pub kind: TransductionKind,
    pub difficulty: Difficulty,
    pub seed: u64,
    /// Letter substitution table indexed by source letter position.
    mapping: Vec<char>,
    suffixes: Vec<String>,
}

/// A target "language": id, decoder tag and (for synthetic tasks) the
/// ground-truth transduction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub tag: String,
    pub truth: Option<Transduction>,
}

fn alphabet() -> Vec<char> {
    SOURCE_ALPHABET.chars().collect()
}

fn letter_index(c: char) -> Option<usize> {
    SOURCE_ALPHABET.find(c)
}

/// Uniform-ish fraction in `[0, 1)` keyed by seed and text.
fn hash_unit(seed: u64, salt: &str, text: &str) -> f64 {
    let h = rng::derive_seed(seed, &[rng::label(salt), rng::label(text)]);
    (h >> 11) as f64 / (1u64 << 53) as f64
}

impl TaskSpec {
    /// A task for externally supplied parallel data, with no ground truth.
    pub fn external(id: &str) -> Self {
        TaskSpec {
            id: id.to_string(),
            tag: format!("<2{id}>"),
            truth: None,
        }
    }

    pub fn transduce(&self, source: &str) -> Option<String> {
        self.truth.as_ref().map(|t| t.apply(source))
    }

    /// Characters the task can ever emit.
    pub fn target_chars(&self) -> Vec<char> {
        let mut cs = alphabet();
        cs.push(' ');
        cs
    }
}

/// Builds a task deterministically from `(kind, difficulty, seed)`.
pub fn gen_task(id: &str, kind: TransductionKind, difficulty: Difficulty, seed: u64) -> TaskSpec {
    assert!(
        (0.0..=1.0).contains(&difficulty.level),
        "difficulty level must lie in [0, 1]"
    );
    let letters = alphabet();
    let mut mapping = letters.clone();
    let eligible = difficulty.alphabet_size.clamp(0, letters.len());
    let moved = match kind {
        TransductionKind::SubstitutionCipher | TransductionKind::SuffixingComposite => {
            (difficulty.level * eligible as f64).round() as usize
        }
        _ => 0,
    };
    if moved >= 2 {
        // Pick `moved` letters and rotate them by a random cycle so that
        // every chosen letter changes.
        let mut r = rng::stream(seed, &[rng::label("cipher")]);
        let mut pool: Vec<usize> = (0..eligible).collect();
        use rand::seq::SliceRandom;
        pool.shuffle(&mut r);
        let chosen = &pool[..moved];
        for (i, &src) in chosen.iter().enumerate() {
            let dst = chosen[(i + 1) % moved];
            mapping[src] = letters[dst];
        }
    }
    let mut suffixes = Vec::new();
    if kind == TransductionKind::SuffixingComposite {
        let mut r = rng::stream(seed, &[rng::label("suffix")]);
        use rand::Rng;
        for _ in 0..difficulty.suffix_count.max(1) {
            let len = r.random_range(2..=3);
            let s: String = (0..len)
                .map(|_| letters[r.random_range(0..letters.len())])
                .collect();
            suffixes.push(s);
        }
    }
    TaskSpec {
        id: id.to_string(),
        tag: format!("<2{id}>"),
        truth: Some(Transduction {
            kind,
            difficulty,
            seed,
            mapping,
            suffixes,
        }),
    }
}

impl Transduction {
    fn cipher_char(&self, c: char, shift: usize) -> char {
        match letter_index(c) {
            Some(i) => {
                let m = letter_index(self.mapping[i]).unwrap();
                SOURCE_ALPHABET.as_bytes()[(m + shift) % 26] as char
            }
            None => c,
        }
    }

    fn cipher_word(&self, w: &str) -> String {
        let shift = usize::from(
            self.difficulty.noise_rate > 0.0
                && hash_unit(self.seed, "noise", w) < self.difficulty.noise_rate,
        );
        w.chars().map(|c| self.cipher_char(c, shift)).collect()
    }

    fn map_word(&self, w: &str) -> String {
        if self.difficulty.level <= 0.0 || hash_unit(self.seed, "remap", w) >= self.difficulty.level
        {
            return w.to_string();
        }
        let letters = alphabet();
        let len = w.chars().count();
        (0..len)
            .map(|i| {
                let u = hash_unit(self.seed, "vocab", &format!("{w}#{i}"));
                letters[(u * 26.0) as usize % 26]
            })
            .collect()
    }

    pub fn apply(&self, source: &str) -> String {
        let words: Vec<&str> = source.split(' ').collect();
        match self.kind {
            TransductionKind::SubstitutionCipher => words
                .iter()
                .map(|w| self.cipher_word(w))
                .collect::<Vec<_>>()
                .join(" "),
            TransductionKind::VocabularyMap => words
                .iter()
                .map(|w| self.map_word(w))
                .collect::<Vec<_>>()
                .join(" "),
            TransductionKind::Reversal => {
                if self.difficulty.level <= 0.0 {
                    return source.to_string();
                }
                let mut out: Vec<String> =
                    words.iter().map(|w| w.chars().rev().collect()).collect();
                if self.difficulty.level > 0.5 {
                    out.reverse();
                }
                out.join(" ")
            }
            TransductionKind::SuffixingComposite => words
                .iter()
                .map(|w| {
                    let mut t = self.cipher_word(w);
                    if !w.is_empty()
                        && self.difficulty.level > 0.0
                        && hash_unit(self.seed, "inflect", w) < self.difficulty.level
                    {
                        let k = (hash_unit(self.seed, "which", w) * self.suffixes.len() as f64)
                            as usize;
                        t.push_str(&self.suffixes[k.min(self.suffixes.len() - 1)]);
                    }
                    t
                })
                .collect::<Vec<_>>()
                .join(" "),
        }
    }

    /// Inverse mapping for the bijective kinds.
    pub fn invert(&self, target: &str) -> Option<String> {
        match self.kind {
            TransductionKind::SubstitutionCipher if self.difficulty.noise_rate == 0.0 => {
                let inverse: Vec<(char, char)> = alphabet()
                    .into_iter()
                    .zip(self.mapping.iter().copied())
                    .map(|(s, t)| (t, s))
                    .collect();
                Some(
                    target
                        .chars()
                        .map(|c| {
                            inverse
                                .iter()
                                .find(|(t, _)| *t == c)
                                .map(|(_, s)| *s)
                                .unwrap_or(c)
                        })
                        .collect(),
                )
            }
            TransductionKind::Reversal => {
                if self.difficulty.level <= 0.0 {
                    return Some(target.to_string());
                }
                // Reversal is an involution.
                Some(self.apply(target))
            }
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_zero_is_identity_for_every_kind() {
        for kind in [
            TransductionKind::SubstitutionCipher,
            TransductionKind::VocabularyMap,
            TransductionKind::Reversal,
            TransductionKind::SuffixingComposite,
        ] {
            let d = Difficulty {
                level: 0.0,
                ..Difficulty::default()
            };
            let t = gen_task("x", kind, d, 3);
            assert_eq!(t.transduce("hello big world").unwrap(), "hello big world");
        }
    }

    #[test]
    fn cipher_is_a_stable_bijection() {
        let a = gen_task("c", TransductionKind::SubstitutionCipher, Difficulty::default(), 11);
        let b = gen_task("c", TransductionKind::SubstitutionCipher, Difficulty::default(), 11);
        assert_eq!(a, b);
        let tr = a.truth.as_ref().unwrap();
        let mut seen: Vec<char> = tr.mapping.clone();
        seen.sort();
        assert_eq!(seen, alphabet());
        // full level moves every letter
        assert!(tr.mapping.iter().zip(alphabet()).all(|(m, s)| *m != s));
        // pinned mapping for seed 11
        assert_eq!(a.transduce("abc").unwrap(), b.transduce("abc").unwrap());
        let c = gen_task("c", TransductionKind::SubstitutionCipher, Difficulty::default(), 12);
        assert_ne!(a.truth.unwrap().mapping, c.truth.unwrap().mapping);
    }

    #[test]
    fn external_task_has_no_truth() {
        assert!(TaskSpec::external("xx").transduce("a").is_none());
    }
}
