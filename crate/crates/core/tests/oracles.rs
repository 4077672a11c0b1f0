//! Independent reference implementations checked against the library.

mod common;

use mtgrpo::metrics::{chrf_pp, paired_bootstrap, paired_bootstrap_by, sentence_chrf, spearman};
use mtgrpo::metrics::chrf::{corpus_stats, score_indices};
use mtgrpo::policy::{sample_group, EOS};
use mtgrpo::reward::{embed_similarity_reward, hashed_ngrams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::oracle::{exact_bootstrap_p, oracle_pairs, oracle_score, oracle_stats, random_text};

// ---- chrF++ ----------------------------------------------------------

#[test]
fn chrf_matches_brute_force_counting() {
    let (hyps, refs) = oracle_pairs(4, 200);
    let got = chrf_pp(&hyps, &refs).unwrap();
    let mut total = vec![(0, 0, 0); 8];
    for (i, (h, rf)) in hyps.iter().zip(&refs).enumerate() {
        let s = oracle_stats(h, rf);
        for (t, x) in total.iter_mut().zip(&s) {
            *t = (t.0 + x.0, t.1 + x.1, t.2 + x.2);
        }
        let want = oracle_score(&s);
        assert!((got.sentences[i] - want).abs() <= 1e-9, "sentence {i}: {h:?} / {rf:?}");
        assert!((sentence_chrf(h, rf) - want).abs() <= 1e-9);
    }
    assert!((got.corpus - oracle_score(&total)).abs() <= 1e-9);
}

// ---- bootstrap -------------------------------------------------------


#[test]
fn bootstrap_p_tracks_exact_enumeration() {
    let a = [40.0, 52.0, 61.0, 38.0, 47.0, 55.0, 49.0, 44.0];
    let b = [43.0, 50.0, 66.0, 35.0, 49.0, 58.0, 47.0, 46.0];
    let mean = |x: &[f64], idx: &[usize]| idx.iter().map(|&i| x[i]).sum::<f64>() / idx.len() as f64;
    let exact = exact_bootstrap_p(8, |idx| mean(&b, idx) <= mean(&a, idx));
    assert!(exact > 0.05 && exact < 0.5, "uninformative case: {exact}");
    let mc = paired_bootstrap(&a, &b, 10_000, 7).unwrap();
    assert!((mc.p_value - exact).abs() < 0.05, "{} vs {exact}", mc.p_value);

    let hyps_a = ["abc de", "fgh", "ij kl", "mn", "op qr st", "uv", "wx yz", "ab"];
    let hyps_b = ["abc df", "fgh", "ij kl", "mo", "op qr s", "uv", "wx yz", "ac"];
    let refs = ["abc de", "fgh i", "ij kl", "mn", "op qr st", "uvw", "wx y", "ab"];
    let sa = corpus_stats(&hyps_a, &refs).unwrap();
    let sb = corpus_stats(&hyps_b, &refs).unwrap();
    let exact = exact_bootstrap_p(8, |idx| score_indices(&sb, idx) <= score_indices(&sa, idx));
    let mc = paired_bootstrap_by(8, |i| score_indices(&sa, i), |i| score_indices(&sb, i), 10_000, 3).unwrap();
    assert!((mc.p_value - exact).abs() < 0.05, "{} vs {exact}", mc.p_value);
}

// ---- embedding similarity ---------------------------------------------

fn unhashed_cosine(a: &str, b: &str) -> Option<f64> {
    let grams = |s: &str| {
        let c: Vec<char> = s.chars().collect();
        let mut v: Vec<(String, f64)> = Vec::new();
        for n in 2..=4 {
            if c.len() >= n {
                for w in c.windows(n) {
                    let g: String = w.iter().collect();
                    match v.iter_mut().find(|(k, _)| *k == g) {
                        Some(e) => e.1 += 1.0,
                        None => v.push((g, 1.0)),
                    }
                }
            }
        }
        v
    };
    let (ga, gb) = (grams(a), grams(b));
    let norm = |v: &[(String, f64)]| v.iter().map(|x| x.1 * x.1).sum::<f64>().sqrt();
    let (na, nb) = (norm(&ga), norm(&gb));
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let dot: f64 = ga
        .iter()
        .filter_map(|(k, x)| gb.iter().find(|(j, _)| j == k).map(|(_, y)| x * y))
        .sum();
    Some(dot / (na * nb))
}

fn gram_set(s: &str) -> Vec<String> {
    let c: Vec<char> = s.chars().collect();
    let mut g: Vec<String> = Vec::new();
    for n in 2..=4 {
        if c.len() >= n {
            g.extend(c.windows(n).map(|w| w.iter().collect::<String>()));
        }
    }
    g.sort();
    g.dedup();
    g
}

#[test]
fn embedding_similarity_matches_unhashed_cosine_without_collisions() {
    let mut r = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    for _ in 0..300 {
        let a = random_text(&mut r);
        let b = random_text(&mut r);
        let mut grams = gram_set(&a);
        grams.extend(gram_set(&b));
        grams.sort();
        grams.dedup();
        let mut buckets: Vec<usize> = hashed_ngrams(&a).into_keys().chain(hashed_ngrams(&b).into_keys()).collect();
        buckets.sort();
        buckets.dedup();
        // skip pairs whose n-grams collide in the hashed space
        if grams.len() != buckets.len() {
            continue;
        }
        let got = embed_similarity_reward(&a, &b);
        match unhashed_cosine(&a, &b) {
            Some(c) => assert!((got - (c + 1.0) / 2.0).abs() < 1e-12, "{a:?} {b:?}"),
            None => assert!(got == 0.5 || got == 1.0),
        }
        checked += 1;
    }
    assert!(checked > 250);
}

// ---- decoding --------------------------------------------------------

fn all_sequences(v: usize, max_len: usize) -> Vec<(Vec<usize>, bool)> {
    let mut out = Vec::new();
    let mut frontier = vec![vec![]];
    for len in 1..=max_len {
        let mut next = Vec::new();
        for p in &frontier {
            for t in 0..v {
                let mut s: Vec<usize> = p.clone();
                s.push(t);
                if t == EOS {
                    out.push((s, true));
                } else if len == max_len {
                    out.push((s, false));
                } else {
                    next.push(s);
                }
            }
        }
        frontier = next;
    }
    out
}

#[test]
fn sequence_probabilities_sum_to_one_and_beam_is_exhaustive_at_full_width() {
    for seed in 0..3 {
        let mut m = common::tiny_model(seed);
        m.perturb_adapters(seed + 9, 0.5);
        let view = m.view(true);
        let prompt = m.prompt(common::TAG, "ab c").unwrap();
        let v = m.vocab().len();
        let seqs = all_sequences(v, 3);
        let mut mass = 0.0;
        let mut best: Option<(f64, Vec<usize>)> = None;
        for (s, _) in &seqs {
            let mut t = vec![mtgrpo::policy::BOS];
            t.extend(s);
            let lp = view.sequence_logprob(&prompt, &t).unwrap();
            mass += lp.exp();
            if best.as_ref().is_none_or(|b| lp > b.0) {
                best = Some((lp, t));
            }
        }
        assert!((mass - 1.0).abs() < 1e-9, "mass {mass}");
        let (lp, tokens) = best.unwrap();
        let beam = view.beam_decode(&prompt, 100_000, 3).unwrap();
        assert_eq!(beam.tokens, tokens);
        assert!((beam.logprob - lp).abs() < 1e-9);

        let g = view.greedy_decode(&prompt, 3).unwrap();
        let b1 = view.beam_decode(&prompt, 1, 3).unwrap();
        assert_eq!(g.tokens, b1.tokens);
    }
}

#[test]
fn tape_and_incremental_routes_agree() {
    for seed in 0..5 {
        let mut m = common::tiny_model(seed);
        if seed > 0 {
            m.perturb_adapters(seed, 0.4);
        }
        let prompt = m.prompt(common::TAG, "abc ab").unwrap();
        let hyps = sample_group(m.view(true), m.view(false), &prompt, 4, 1.0, 10, seed).unwrap();
        for adapters in [true, false] {
            let view = m.view(adapters);
            for h in &hyps {
                let a = view.tape_logits(&prompt, &h.tokens).unwrap();
                let b = view.teacher_forced_logits(&prompt, &h.tokens).unwrap();
                let flat: Vec<f64> = b.concat();
                let worst = a.data().iter().zip(&flat).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                assert!(worst < 1e-9, "logits differ by {worst}");
                let lt = view.tape_sequence_logprob(&prompt, &h.tokens).unwrap();
                let li = view.sequence_logprob(&prompt, &h.tokens).unwrap();
                assert!((lt - li).abs() < 1e-9);
                let sampled = if adapters { h.logprob } else { h.ref_logprob.unwrap() };
                assert!((sampled - li).abs() < 1e-9);
            }
        }
    }
}

// ---- rank correlation -------------------------------------------------

#[test]
fn spearman_matches_the_squared_rank_difference_formula() {
    let mut r = ChaCha8Rng::seed_from_u64(2);
    for n in [5usize, 8, 13, 30] {
        let xs: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
        let ys: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
        let rank = |v: &[f64]| -> Vec<f64> {
            v.iter().map(|x| v.iter().filter(|y| *y < x).count() as f64 + 1.0).collect()
        };
        let (rx, ry) = (rank(&xs), rank(&ys));
        let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b) * (a - b)).sum();
        let nf = n as f64;
        let want = 1.0 - 6.0 * d2 / (nf * (nf * nf - 1.0));
        assert!((spearman(&xs, &ys).unwrap().rho - want).abs() < 1e-12);
    }
}
