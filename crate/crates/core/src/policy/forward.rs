//! Teacher-forced forward pass on the autodiff tape. This is the training
//! route; [`super::infer`] is the incremental route used for decoding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ParamId, Tape, Var};
use crate::error::{Error, Result};
use crate::policy::model::{Attn, Linear, Norm, PolicyModel};
use crate::policy::vocab::{BOS, EOS};
use crate::tensor::Tensor;

pub(crate) const LN_EPS: f64 = 1e-5;
pub(crate) const MASKED: f64 = -1e9;

/// Which parameter group is bound as trainable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trainable {
    Nothing,
    Base,
    Adapters,
}

/// Encoder input: source characters followed by EOS, plus the decoder tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub src: Vec<usize>,
    pub tag: usize,
}

impl Prompt {
    pub fn new(mut chars: Vec<usize>, tag: usize) -> Self {
        chars.push(EOS);
        Prompt { src: chars, tag }
    }
}

/// Sinusoidal position encoding row.
pub(crate) fn position_row(pos: usize, d: usize) -> Vec<f64> {
    (0..d)
        .map(|i| {
            let k = (i / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * k / d as f64);
            if i % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect()
}

/// Decoder input and prediction targets for a hypothesis `[BOS, t1..tm]`:
/// the input is `[BOS, TAG, t1..t(m-1)]` and rows `1..=m` predict `t1..tm`.
pub(crate) fn teacher_forcing(tag: usize, target: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    if target.len() < 2 || target[0] != BOS {
        return Err(Error::InvalidSequence(
            "target must start with BOS and hold at least one more token".into(),
        ));
    }
    let mut input = vec![BOS, tag];
    input.extend_from_slice(&target[1..target.len() - 1]);
    Ok((input, target[1..].to_vec()))
}

pub(crate) struct Dropout {
    rng: ChaCha8Rng,
    p: f64,
}

impl Dropout {
    pub fn new(seed: u64, p: f64) -> Self {
        Dropout {
            rng: ChaCha8Rng::seed_from_u64(seed),
            p,
        }
    }

    fn mask(&mut self, shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        let keep = 1.0 / (1.0 - self.p);
        let data = (0..n)
            .map(|_| if self.rng.random::<f64>() < self.p { 0.0 } else { keep })
            .collect();
        Tensor::new(shape.to_vec(), data).expect("mask shape")
    }
}

/// Model parameters bound onto one tape.
pub(crate) struct Binding {
    base: Vec<Var>,
    lora: Option<Vec<Var>>,
}

impl PolicyModel {
    pub(crate) fn bind(&self, tape: &mut Tape, adapters: bool, trainable: Trainable) -> Binding {
        let base = self
            .base()
            .tensors()
            .iter()
            .enumerate()
            .map(|(i, t)| match trainable {
                Trainable::Base => tape.param(ParamId(i), t.clone()),
                _ => tape.constant(t.clone()),
            })
            .collect();
        let lora = adapters.then(|| {
            self.adapters()
                .tensors()
                .iter()
                .enumerate()
                .map(|(i, t)| match trainable {
                    Trainable::Adapters => tape.param(ParamId(i), t.clone()),
                    _ => tape.constant(t.clone()),
                })
                .collect()
        });
        Binding { base, lora }
    }
}

impl PolicyModel {
    /// Constant base with caller-provided adapter vars, in adapter order.
    pub(crate) fn bind_adapter_vars(&self, tape: &mut Tape, adapters: &[Var]) -> Binding {
        let base = self.base().tensors().iter().map(|t| tape.constant(t.clone())).collect();
        Binding {
            base,
            lora: Some(adapters.to_vec()),
        }
    }
}

pub(crate) struct TapeForward<'a> {
    pub model: &'a PolicyModel,
    pub bind: &'a Binding,
    pub dropout: Option<&'a mut Dropout>,
}

impl TapeForward<'_> {
    fn linear(&self, tape: &mut Tape, x: Var, l: Linear) -> Result<Var> {
        let y = tape.matmul(x, self.bind.base[l.w])?;
        Ok(tape.add_bias(y, self.bind.base[l.b])?)
    }

    fn norm(&self, tape: &mut Tape, x: Var, n: Norm) -> Result<Var> {
        Ok(tape.layer_norm(x, self.bind.base[n.g], self.bind.base[n.b], LN_EPS)?)
    }

    /// `x·W + b + s·(drop(x)·A)·B`, or the plain projection without adapters.
    fn adapted(&mut self, tape: &mut Tape, x: Var, l: Linear, ab: Option<(usize, usize)>) -> Result<Var> {
        let y = self.linear(tape, x, l)?;
        let (Some(lora), Some((a, b))) = (&self.bind.lora, ab) else {
            return Ok(y);
        };
        let (a, b) = (lora[a], lora[b]);
        let mut xin = x;
        if let Some(d) = self.dropout.as_deref_mut() {
            if d.p > 0.0 {
                let m = d.mask(tape.value(x).shape());
                let m = tape.constant(m);
                xin = tape.mul(x, m)?;
            }
        }
        let h = tape.matmul(xin, a)?;
        let h = tape.matmul(h, b)?;
        let h = tape.scale(h, self.model.lora().scale())?;
        Ok(tape.add(y, h)?)
    }

    fn attention(&mut self, tape: &mut Tape, xq: Var, xkv: Var, at: Attn, causal: bool) -> Result<Var> {
        let dims = self.model.dims().clone();
        let slot = self.model.layout.slots[at.slot];
        let q = self.adapted(tape, xq, at.q, Some((slot.qa, slot.qb)))?;
        let k = self.linear(tape, xkv, at.k)?;
        let v = self.adapted(tape, xkv, at.v, Some((slot.va, slot.vb)))?;
        let (t, s) = (tape.value(xq).shape()[0], tape.value(xkv).shape()[0]);
        let dh = dims.head_dim();
        let mask = causal.then(|| {
            let mut m = vec![0.0; t * s];
            for i in 0..t {
                for j in i + 1..s {
                    m[i * s + j] = MASKED;
                }
            }
            Tensor::new(vec![t, s], m).expect("mask shape")
        });
        let mask = mask.map(|m| tape.constant(m));
        let mut heads = Vec::with_capacity(dims.n_heads);
        for h in 0..dims.n_heads {
            let qh = tape.slice_cols(q, h * dh, dh)?;
            let kh = tape.slice_cols(k, h * dh, dh)?;
            let vh = tape.slice_cols(v, h * dh, dh)?;
            let kt = tape.transpose(kh)?;
            let sc = tape.matmul(qh, kt)?;
            let mut sc = tape.scale(sc, 1.0 / (dh as f64).sqrt())?;
            if let Some(m) = mask {
                sc = tape.add(sc, m)?;
            }
            let p = tape.softmax_rows(sc)?;
            heads.push(tape.matmul(p, vh)?);
        }
        let cat = tape.concat_cols(&heads)?;
        self.linear(tape, cat, at.o)
    }

    fn feed_forward(&self, tape: &mut Tape, x: Var, ff1: Linear, ff2: Linear) -> Result<Var> {
        let h = self.linear(tape, x, ff1)?;
        let h = tape.gelu(h)?;
        self.linear(tape, h, ff2)
    }

    fn embed(&self, tape: &mut Tape, ids: &[usize]) -> Result<Var> {
        let d = self.model.dims().d_model;
        if ids.len() > self.model.dims().max_positions {
            return Err(Error::InvalidSequence(format!(
                "sequence of {} tokens exceeds {} positions",
                ids.len(),
                self.model.dims().max_positions
            )));
        }
        self.model.vocab().check(ids)?;
        let e = tape.gather_rows(self.bind.base[self.model.layout.emb], ids)?;
        let pe: Vec<f64> = (0..ids.len()).flat_map(|p| position_row(p, d)).collect();
        let pe = tape.constant(Tensor::new(vec![ids.len(), d], pe)?);
        Ok(tape.add(e, pe)?)
    }

    pub fn encode(&mut self, tape: &mut Tape, src: &[usize]) -> Result<Var> {
        let mut x = self.embed(tape, src)?;
        let layout = self.model.layout.clone();
        for blk in &layout.enc {
            let h = self.norm(tape, x, blk.ln1)?;
            let a = self.attention(tape, h, h, blk.attn, false)?;
            x = tape.add(x, a)?;
            let h = self.norm(tape, x, blk.ln2)?;
            let f = self.feed_forward(tape, h, blk.ff1, blk.ff2)?;
            x = tape.add(x, f)?;
        }
        self.norm(tape, x, layout.enc_norm)
    }

    /// Logits `[T, V]` for decoder input `ids`.
    pub fn decode(&mut self, tape: &mut Tape, memory: Var, ids: &[usize]) -> Result<Var> {
        let mut x = self.embed(tape, ids)?;
        let layout = self.model.layout.clone();
        for blk in &layout.dec {
            let h = self.norm(tape, x, blk.ln1)?;
            let a = self.attention(tape, h, h, blk.self_attn, true)?;
            x = tape.add(x, a)?;
            let h = self.norm(tape, x, blk.ln2)?;
            let c = self.attention(tape, h, memory, blk.cross, false)?;
            x = tape.add(x, c)?;
            let h = self.norm(tape, x, blk.ln3)?;
            let f = self.feed_forward(tape, h, blk.ff1, blk.ff2)?;
            x = tape.add(x, f)?;
        }
        let h = self.norm(tape, x, layout.dec_norm)?;
        self.linear(tape, h, layout.out)
    }

    /// Per-position log-probabilities of `target` (row 0 masked out), as a
    /// vector var of length `m + 1`, and the scalar sum.
    pub fn target_logprobs(&mut self, tape: &mut Tape, memory: Var, tag: usize, target: &[usize]) -> Result<(Var, Var)> {
        let (input, predicted) = teacher_forcing(tag, target)?;
        self.model.vocab().check(target)?;
        let logits = self.decode(tape, memory, &input)?;
        let lp = tape.log_softmax_rows(logits)?;
        let mut idx = vec![0];
        idx.extend_from_slice(&predicted);
        let picked = tape.pick(lp, &idx)?;
        let mut m = vec![1.0; idx.len()];
        m[0] = 0.0;
        let mask = tape.constant(Tensor::vector(m));
        let per = tape.mul(picked, mask)?;
        let total = tape.sum(per)?;
        Ok((per, total))
    }
}

impl PolicyModel {
    /// Summed teacher-forced log-probabilities of `targets` for one prompt,
    /// as scalar vars on `tape`. The encoder runs once and is shared.
    pub(crate) fn tape_group_logprobs(
        &self,
        tape: &mut Tape,
        bind: &Binding,
        dropout: Option<&mut Dropout>,
        prompt: &Prompt,
        targets: &[Vec<usize>],
    ) -> Result<Vec<Var>> {
        let mut fwd = TapeForward {
            model: self,
            bind,
            dropout,
        };
        let memory = fwd.encode(tape, &prompt.src)?;
        targets
            .iter()
            .map(|t| Ok(fwd.target_logprobs(tape, memory, prompt.tag, t)?.1))
            .collect()
    }
}

impl crate::policy::PolicyView<'_> {
    /// Logits `[m, V]` of the predicted positions through the tape route.
    pub fn tape_logits(&self, prompt: &Prompt, target: &[usize]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bind = self.model.bind(&mut tape, self.adapters, Trainable::Nothing);
        let (input, _) = teacher_forcing(prompt.tag, target)?;
        let mut fwd = TapeForward {
            model: self.model,
            bind: &bind,
            dropout: None,
        };
        let memory = fwd.encode(&mut tape, &prompt.src)?;
        let logits = fwd.decode(&mut tape, memory, &input)?;
        let t = tape.value(logits);
        let v = t.shape()[1];
        let rows = t.shape()[0];
        Ok(Tensor::new(vec![rows - 1, v], t.data()[v..].to_vec())?)
    }

    /// Sequence log-probability through the tape route.
    pub fn tape_sequence_logprob(&self, prompt: &Prompt, target: &[usize]) -> Result<f64> {
        let mut tape = Tape::new();
        let bind = self.model.bind(&mut tape, self.adapters, Trainable::Nothing);
        let v = self
            .model
            .tape_group_logprobs(&mut tape, &bind, None, prompt, &[target.to_vec()])?;
        Ok(tape.value(v[0]).item())
    }
}
