//! Hashed character n-gram embedding similarity.

use std::collections::BTreeMap;

pub const HASH_DIM: usize = 4096;
pub const MIN_N: usize = 2;
pub const MAX_N: usize = 4;

/// 32-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u32 {
    let mut h: u32 = 0x811c_9dc5;
    for &b in bytes {
        h ^= b as u32;
        h = h.wrapping_mul(0x0100_0193);
    }
    h
}

/// Sparse bucket counts of all character n-grams with `MIN_N <= n <= MAX_N`.
pub fn hashed_ngrams(text: &str) -> BTreeMap<usize, f64> {
    let chars: Vec<char> = text.chars().collect();
    let mut v = BTreeMap::new();
    let mut buf = String::new();
    for n in MIN_N..=MAX_N {
        if chars.len() < n {
            break;
        }
        for w in chars.windows(n) {
            buf.clear();
            buf.extend(w);
            *v.entry(fnv1a(buf.as_bytes()) as usize % HASH_DIM).or_insert(0.0) += 1.0;
        }
    }
    v
}

fn cosine(a: &BTreeMap<usize, f64>, b: &BTreeMap<usize, f64>) -> Option<f64> {
    let na: f64 = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let dot: f64 = a
        .iter()
        .filter_map(|(k, x)| b.get(k).map(|y| x * y))
        .sum();
    Some((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Cosine of the two hashed vectors mapped to `[0, 1]` by `(c + 1) / 2`.
/// Texts too short for any n-gram score 1 when equal and 0.5 otherwise.
pub fn embed_similarity_reward(source: &str, hypothesis: &str) -> f64 {
    let a = hashed_ngrams(source);
    let b = hashed_ngrams(hypothesis);
    match cosine(&a, &b) {
        Some(c) => (c + 1.0) / 2.0,
        None if a.is_empty() && b.is_empty() && source == hypothesis => 1.0,
        None => 0.5,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_similarity_and_symmetry() {
        assert_eq!(embed_similarity_reward("hello world", "hello world"), 1.0);
        assert_eq!(embed_similarity_reward("", ""), 1.0);
        assert_eq!(embed_similarity_reward("", "abc"), 0.5);
        let (a, b) = ("the cat sat", "a cat sits");
        assert_eq!(embed_similarity_reward(a, b), embed_similarity_reward(b, a));
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0x811c_9dc5);
        assert_eq!(fnv1a(b"a"), 0xe40c_292c);
        assert_eq!(fnv1a(b"foobar"), 0xbf9c_f968);
    }
}
