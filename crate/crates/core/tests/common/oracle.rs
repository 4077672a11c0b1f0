//! Brute-force chrF++ counting and exact bootstrap enumeration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Clipped matches, hypothesis count and reference count for order `n`,
/// by linear scans over the n-gram lists.
pub fn brute_counts<T: PartialEq>(h: &[T], r: &[T], n: usize) -> (u64, u64, u64) {
    let grams = |s: &[T]| -> Vec<usize> { if s.len() >= n { (0..=s.len() - n).collect() } else { vec![] } };
    let (hg, rg) = (grams(h), grams(r));
    let same = |a: &[T], i: usize, b: &[T], j: usize| (0..n).all(|k| a[i + k] == b[j + k]);
    let mut matches = 0;
    let mut seen: Vec<usize> = Vec::new();
    for &i in &hg {
        if seen.iter().any(|&s| same(h, s, h, i)) {
            continue;
        }
        seen.push(i);
        let ch = hg.iter().filter(|&&j| same(h, i, h, j)).count() as u64;
        let cr = rg.iter().filter(|&&j| same(h, i, r, j)).count() as u64;
        matches += ch.min(cr);
    }
    (matches, hg.len() as u64, rg.len() as u64)
}

pub fn oracle_stats(hyp: &str, reference: &str) -> Vec<(u64, u64, u64)> {
    let hc: Vec<char> = hyp.chars().filter(|c| !c.is_whitespace()).collect();
    let rc: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    let hw: Vec<&str> = hyp.split_whitespace().collect();
    let rw: Vec<&str> = reference.split_whitespace().collect();
    let mut out: Vec<_> = (1..=6).map(|n| brute_counts(&hc, &rc, n)).collect();
    out.extend((1..=2).map(|n| brute_counts(&hw, &rw, n)));
    out
}

pub fn oracle_score(stats: &[(u64, u64, u64)]) -> f64 {
    let mut fs = Vec::new();
    for &(m, h, r) in stats {
        if h == 0 && r == 0 {
            continue;
        }
        let p = if h == 0 { 0.0 } else { m as f64 / h as f64 };
        let rec = if r == 0 { 0.0 } else { m as f64 / r as f64 };
        fs.push(if p + rec == 0.0 { 0.0 } else { 5.0 * p * rec / (4.0 * p + rec) });
    }
    if fs.is_empty() {
        100.0
    } else {
        100.0 * fs.iter().sum::<f64>() / fs.len() as f64
    }
}

pub fn random_text(r: &mut ChaCha8Rng) -> String {
    const POOL: &[char] = &['a', 'b', 'c', 'd', 'é', 'ß', 'ж', '🙂', ' ', ' ', '.'];
    let n = r.random_range(0..=14);
    (0..n)
        .map(|_| match r.random_range(0..10) {
            0 => char::from_u32(r.random_range(0x4E00..0x4E10)).unwrap(),
            _ => POOL[r.random_range(0..POOL.len())],
        })
        .collect()
}

/// `n` hypothesis/reference pairs mixing empty, identical, reversed and
/// unrelated strings over Latin, Cyrillic, emoji and CJK characters.
pub fn oracle_pairs(seed: u64, n: usize) -> (Vec<String>, Vec<String>) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut hyps: Vec<String> = Vec::new();
    let mut refs: Vec<String> = Vec::new();
    for i in 0..n {
        let h = random_text(&mut r);
        let rf = match i % 7 {
            0 => String::new(),
            1 => h.clone(),
            2 => h.chars().rev().collect(),
            _ => random_text(&mut r),
        };
        hyps.push(if i % 11 == 0 { String::new() } else { h });
        refs.push(rf);
    }
    (hyps, refs)
}

/// Exact bootstrap p: every multiset of `n` indices weighted by its
/// multinomial count.
pub fn exact_bootstrap_p(n: usize, better_or_equal_a: impl Fn(&[usize]) -> bool) -> f64 {
    fn rec(
        i: usize,
        left: usize,
        n: usize,
        counts: &mut Vec<usize>,
        f: &dyn Fn(&[usize]) -> bool,
        fact: &[f64],
        hits: &mut f64,
    ) {
        if i == n - 1 {
            counts.push(left);
            let mut idx = Vec::new();
            for (j, &c) in counts.iter().enumerate() {
                idx.extend(std::iter::repeat_n(j, c));
            }
            let w = fact[n] / counts.iter().map(|&c| fact[c]).product::<f64>();
            if f(&idx) {
                *hits += w;
            }
            counts.pop();
            return;
        }
        for c in 0..=left {
            counts.push(c);
            rec(i + 1, left - c, n, counts, f, fact, hits);
            counts.pop();
        }
    }
    let fact: Vec<f64> = (0..=n).scan(1.0, |acc, k| {
        if k > 0 {
            *acc *= k as f64;
        }
        Some(*acc)
    }).collect();
    let mut hits = 0.0;
    rec(0, n, n, &mut Vec::new(), &better_or_equal_a, &fact, &mut hits);
    hits / (n as f64).powi(n as i32)
}
