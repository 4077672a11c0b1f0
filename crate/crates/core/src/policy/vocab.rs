//! Character vocabulary with special ids and one tag per target task.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
const N_SPECIAL: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "VocabRepr", try_from = "VocabRepr")]
pub struct Vocabulary {
    tags: Vec<String>,
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    tags: Vec<String>,
    chars: String,
}

impl From<Vocabulary> for VocabRepr {
    fn from(v: Vocabulary) -> Self {
        VocabRepr {
            tags: v.tags,
            chars: v.chars.into_iter().collect(),
        }
    }
}

impl TryFrom<VocabRepr> for Vocabulary {
    type Error = Error;

    fn try_from(r: VocabRepr) -> Result<Self> {
        Vocabulary::new(r.tags, r.chars.chars())
    }
}

impl Vocabulary {
    /// Builds a vocabulary; characters are deduplicated and sorted so the
    /// id assignment does not depend on input order.
    pub fn new(
        tags: impl IntoIterator<Item = String>,
        chars: impl IntoIterator<Item = char>,
    ) -> Result<Self> {
        let tags: Vec<String> = tags.into_iter().collect();
        for (i, t) in tags.iter().enumerate() {
            if tags[..i].contains(t) {
                return Err(Error::InvalidArgument(format!("duplicate task tag `{t}`")));
            }
        }
        let mut chars: Vec<char> = chars.into_iter().collect();
        chars.sort_unstable();
        chars.dedup();
        let base = N_SPECIAL + tags.len();
        let index = chars.iter().enumerate().map(|(i, &c)| (c, base + i)).collect();
        Ok(Vocabulary { tags, chars, index })
    }

    pub fn len(&self) -> usize {
        N_SPECIAL + self.tags.len() + self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn tag_id(&self, tag: &str) -> Option<usize> {
        self.tags.iter().position(|t| t == tag).map(|i| N_SPECIAL + i)
    }

    pub fn is_special(&self, id: usize) -> bool {
        id < N_SPECIAL + self.tags.len()
    }

    /// Character ids for `text`; characters outside the vocabulary map to UNK.
    pub fn encode(&self, text: &str) -> Vec<usize> {
        text.chars()
            .map(|c| self.index.get(&c).copied().unwrap_or(UNK))
            .collect()
    }

    /// Text for a token sequence; special ids are dropped.
    pub fn decode(&self, ids: &[usize]) -> String {
        let base = N_SPECIAL + self.tags.len();
        ids.iter()
            .filter(|&&id| id >= base)
            .filter_map(|&id| self.chars.get(id - base))
            .collect()
    }

    pub fn check(&self, ids: &[usize]) -> Result<()> {
        match ids.iter().find(|&&id| id >= self.len()) {
            Some(&id) => Err(Error::TokenOutOfVocabulary {
                id,
                size: self.len(),
            }),
            None => Ok(()),
        }
    }
}
