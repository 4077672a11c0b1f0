//! Scoring, sampling and search decoding over the incremental route.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::policy::forward::{teacher_forcing, Prompt};
use crate::policy::infer::{DecoderState, Encoded, Inference};
use crate::policy::model::PolicyView;
use crate::policy::vocab::{BOS, EOS};
use crate::tensor::{argmax, log_softmax};

/// One decoded target sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    /// `BOS y1 .. yn [EOS]`.
    pub tokens: Vec<usize>,
    pub text: String,
    /// Summed log-probability under the decoding view.
    pub logprob: f64,
    /// Summed log-probability under π_ref, when scored.
    pub ref_logprob: Option<f64>,
    pub finished: bool,
}

impl Hypothesis {
    pub fn generated(&self) -> usize {
        self.tokens.len() - 1
    }
}

impl<'a> PolicyView<'a> {
    pub fn inference(&self) -> Inference<'a> {
        Inference::new(*self)
    }

    /// Logits `[m, V]` for every predicted position of `target`.
    pub fn teacher_forced_logits(&self, prompt: &Prompt, target: &[usize]) -> Result<Vec<Vec<f64>>> {
        let inf = self.inference();
        let enc = inf.encode(&prompt.src)?;
        let (input, _) = teacher_forcing(prompt.tag, target)?;
        self.model.vocab().check(target)?;
        let mut st = inf.start();
        let logits = inf.feed(&enc, &mut st, &input)?;
        let v = self.model.vocab().len();
        Ok(logits.chunks(v).skip(1).map(<[f64]>::to_vec).collect())
    }

    /// `Σ_t log softmax(logits_t)[target_t]` over every token after BOS.
    pub fn sequence_logprob(&self, prompt: &Prompt, target: &[usize]) -> Result<f64> {
        let (_, predicted) = teacher_forcing(prompt.tag, target)?;
        let logits = self.teacher_forced_logits(prompt, target)?;
        Ok(logits
            .iter()
            .zip(&predicted)
            .map(|(row, &t)| log_softmax(row)[t])
            .sum())
    }

    pub fn greedy_decode(&self, prompt: &Prompt, max_tokens: usize) -> Result<Hypothesis> {
        let inf = self.inference();
        let enc = inf.encode(&prompt.src)?;
        let mut st = inf.start();
        let mut logits = last_row(inf.feed(&enc, &mut st, &[BOS, prompt.tag])?, self.model.vocab().len());
        let mut tokens = vec![BOS];
        let mut lp = 0.0;
        let mut finished = false;
        for step in 0..max_tokens {
            let ls = log_softmax(&logits);
            let t = argmax(&ls);
            lp += ls[t];
            tokens.push(t);
            if t == EOS {
                finished = true;
                break;
            }
            if step + 1 < max_tokens {
                logits = last_row(inf.feed(&enc, &mut st, &[t])?, ls.len());
            }
        }
        Ok(self.hypothesis(tokens, lp, None, finished))
    }

    /// Beam search without length normalisation. Each step keeps the top
    /// `beam_width` extensions; those ending in EOS move to the finished set.
    /// Search stops once the best finished score is at least the best live
    /// score, since scores only decrease.
    pub fn beam_decode(&self, prompt: &Prompt, beam_width: usize, max_tokens: usize) -> Result<Hypothesis> {
        if beam_width == 0 {
            return Err(Error::InvalidArgument("beam width must be at least 1".into()));
        }
        let inf = self.inference();
        let v = self.model.vocab().len();
        let enc = inf.encode(&prompt.src)?;
        let mut st = inf.start();
        let first = last_row(inf.feed(&enc, &mut st, &[BOS, prompt.tag])?, v);
        struct Beam {
            tokens: Vec<usize>,
            score: f64,
            state: DecoderState,
            logits: Vec<f64>,
        }
        let mut live = vec![Beam {
            tokens: vec![BOS],
            score: 0.0,
            state: st,
            logits: first,
        }];
        let mut finished: Vec<(Vec<usize>, f64)> = Vec::new();
        let mut step = 0;
        while !live.is_empty() && step < max_tokens {
            step += 1;
            let mut cands: Vec<(f64, usize, usize)> = Vec::new();
            for (bi, b) in live.iter().enumerate() {
                for (t, l) in log_softmax(&b.logits).into_iter().enumerate() {
                    cands.push((b.score + l, bi, t));
                }
            }
            cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            cands.truncate(beam_width);
            let mut next = Vec::new();
            for (score, bi, t) in cands {
                let mut tokens = live[bi].tokens.clone();
                tokens.push(t);
                if t == EOS {
                    finished.push((tokens, score));
                } else {
                    next.push((tokens, score, bi));
                }
            }
            let mut new_live = Vec::with_capacity(next.len());
            for (tokens, score, bi) in next {
                let mut state = live[bi].state.clone();
                let logits = if step < max_tokens {
                    last_row(inf.feed(&enc, &mut state, &[*tokens.last().unwrap()])?, v)
                } else {
                    Vec::new()
                };
                new_live.push(Beam {
                    tokens,
                    score,
                    state,
                    logits,
                });
            }
            live = new_live;
            let best_fin = finished.iter().map(|f| f.1).fold(f64::NEG_INFINITY, f64::max);
            let best_live = live.iter().map(|b| b.score).fold(f64::NEG_INFINITY, f64::max);
            if !finished.is_empty() && best_fin >= best_live {
                break;
            }
        }
        let mut pool: Vec<(Vec<usize>, f64, bool)> =
            finished.into_iter().map(|(t, s)| (t, s, true)).collect();
        pool.extend(live.into_iter().map(|b| (b.tokens, b.score, false)));
        let best = pool
            .into_iter()
            .reduce(|a, b| if b.1 > a.1 { b } else { a })
            .expect("beam search keeps at least one candidate");
        Ok(self.hypothesis(best.0, best.1, None, best.2))
    }

    fn hypothesis(&self, tokens: Vec<usize>, logprob: f64, ref_logprob: Option<f64>, finished: bool) -> Hypothesis {
        Hypothesis {
            text: self.model.vocab().decode(&tokens[1..]),
            tokens,
            logprob,
            ref_logprob,
            finished,
        }
    }
}

fn last_row(logits: Vec<f64>, v: usize) -> Vec<f64> {
    logits[logits.len() - v..].to_vec()
}

/// Draws from `softmax(logits / temperature)` with one uniform variate.
fn sample_token(logits: &[f64], temperature: f64, rng: &mut ChaCha8Rng) -> usize {
    let scaled: Vec<f64> = logits.iter().map(|l| l / temperature).collect();
    let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scaled.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            last = i;
        }
        acc += w;
        if u < acc {
            return i;
        }
    }
    last
}

struct Lockstep<'b, 'a> {
    inf: &'b Inference<'a>,
    enc: &'b Encoded,
    state: DecoderState,
    logits: Vec<f64>,
}

/// Samples `k` hypotheses at `temperature` from `policy`, scoring each under
/// `policy` (untempered) and `reference` in the same pass. Hypothesis `i`
/// uses stream `i` of a ChaCha8 generator seeded with `seed`, so changing
/// `k` never reshuffles the other hypotheses.
pub fn sample_group(
    policy: PolicyView<'_>,
    reference: PolicyView<'_>,
    prompt: &Prompt,
    k: usize,
    temperature: f64,
    max_tokens: usize,
    seed: u64,
) -> Result<Vec<Hypothesis>> {
    if k < 2 {
        return Err(Error::GroupTooSmall(k));
    }
    let s = Sampler::new(policy, reference, prompt, temperature)?;
    par::try_map_indexed(k, |i| s.sample(max_tokens, seed, i as u64))
}

/// A single temperature sample (stream 0 of `seed`), scored under `view`.
pub fn sample_decode(
    view: PolicyView<'_>,
    prompt: &Prompt,
    temperature: f64,
    max_tokens: usize,
    seed: u64,
) -> Result<Hypothesis> {
    Sampler::new(view, view, prompt, temperature)?.sample(max_tokens, seed, 0)
}

struct Sampler<'p, 'a> {
    policy: PolicyView<'a>,
    prompt: &'p Prompt,
    temperature: f64,
    pinf: Inference<'a>,
    penc: Encoded,
    reference: Option<(Inference<'a>, Encoded)>,
}

impl<'p, 'a> Sampler<'p, 'a> {
    fn new(policy: PolicyView<'a>, reference: PolicyView<'a>, prompt: &'p Prompt, temperature: f64) -> Result<Self> {
        if temperature.is_nan() || temperature <= 0.0 {
            return Err(Error::InvalidArgument(format!("temperature must be positive, got {temperature}")));
        }
        let same = policy.adapters == reference.adapters
            || (std::ptr::eq(policy.model, reference.model) && policy.model.adapters_are_identity());
        let pinf = policy.inference();
        let penc = pinf.encode(&prompt.src)?;
        let reference = if same {
            None
        } else {
            let rinf = reference.inference();
            let renc = rinf.encode(&prompt.src)?;
            Some((rinf, renc))
        };
        Ok(Sampler {
            policy,
            prompt,
            temperature,
            pinf,
            penc,
            reference,
        })
    }

    fn sample(&self, max_tokens: usize, seed: u64, stream: u64) -> Result<Hypothesis> {
        let v = self.policy.model.vocab().len();
        let start = [BOS, self.prompt.tag];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut p = Lockstep {
            inf: &self.pinf,
            enc: &self.penc,
            state: self.pinf.start(),
            logits: Vec::new(),
        };
        p.logits = last_row(p.inf.feed(p.enc, &mut p.state, &start)?, v);
        let mut r = match &self.reference {
            Some((inf, enc)) => {
                let mut r = Lockstep {
                    inf,
                    enc,
                    state: inf.start(),
                    logits: Vec::new(),
                };
                r.logits = last_row(r.inf.feed(r.enc, &mut r.state, &start)?, v);
                Some(r)
            }
            None => None,
        };
        let mut tokens = vec![BOS];
        let (mut lp, mut rlp) = (0.0, 0.0);
        let mut finished = false;
        for step in 0..max_tokens {
            let t = sample_token(&p.logits, self.temperature, &mut rng);
            let l = log_softmax(&p.logits)[t];
            lp += l;
            rlp += match &r {
                Some(r) => log_softmax(&r.logits)[t],
                None => l,
            };
            tokens.push(t);
            if t == EOS {
                finished = true;
                break;
            }
            if step + 1 < max_tokens {
                p.logits = last_row(p.inf.feed(p.enc, &mut p.state, &[t])?, v);
                if let Some(r) = r.as_mut() {
                    r.logits = last_row(r.inf.feed(r.enc, &mut r.state, &[t])?, v);
                }
            }
        }
        Ok(self.policy.hypothesis(tokens, lp, Some(rlp), finished))
    }
}
