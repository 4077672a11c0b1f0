//! Incremental decoding on plain slices with per-layer key/value caches.
//! Adapters are folded into merged weights `W + s·A·B` once per view.

use crate::error::Result;
use crate::policy::forward::{position_row, LN_EPS};
use crate::policy::model::{Attn, Linear, PolicyView};
use crate::tensor::{self, layer_norm_row, matmul, matmul_acc};

pub struct Inference<'a> {
    view: PolicyView<'a>,
    /// Merged `(q, v)` weights per adapter slot when adapters are on.
    merged: Option<Vec<(Vec<f64>, Vec<f64>)>>,
}

/// Encoder output and the cross-attention keys/values of every decoder layer.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub memory: Vec<f64>,
    pub len: usize,
    cross_k: Vec<Vec<f64>>,
    cross_v: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct DecoderState {
    self_k: Vec<Vec<f64>>,
    self_v: Vec<Vec<f64>>,
    pub len: usize,
}

impl<'a> Inference<'a> {
    pub fn new(view: PolicyView<'a>) -> Self {
        let m = view.model;
        let merged = view.adapters.then(|| {
            let d = m.dims().d_model;
            let r = m.lora().rank;
            let s = m.lora().scale();
            let mut out = Vec::with_capacity(m.layout.slots.len());
            let attn_of = |slot: usize| -> Attn {
                for b in &m.layout.enc {
                    if b.attn.slot == slot {
                        return b.attn;
                    }
                }
                for b in &m.layout.dec {
                    if b.self_attn.slot == slot {
                        return b.self_attn;
                    }
                    if b.cross.slot == slot {
                        return b.cross;
                    }
                }
                unreachable!("slot {slot} has an attention block")
            };
            for (i, sl) in m.layout.slots.iter().enumerate() {
                let at = attn_of(i);
                let merge = |w: usize, a: usize, b: usize| {
                    let mut ab = matmul(m.adapters().get(a).data(), m.adapters().get(b).data(), d, r, d);
                    for (x, w) in ab.iter_mut().zip(m.base().get(w).data()) {
                        *x = w + s * *x;
                    }
                    ab
                };
                out.push((merge(at.q.w, sl.qa, sl.qb), merge(at.v.w, sl.va, sl.vb)));
            }
            out
        });
        Inference { view, merged }
    }

    pub fn view(&self) -> PolicyView<'a> {
        self.view
    }

    fn p(&self, i: usize) -> &[f64] {
        self.view.model.base().get(i).data()
    }

    fn linear_rows(&self, x: &[f64], rows: usize, l: Linear, w: &[f64]) -> Vec<f64> {
        let b = self.p(l.b);
        let n = b.len();
        let k = x.len() / rows;
        let mut out = Vec::with_capacity(rows * n);
        for _ in 0..rows {
            out.extend_from_slice(b);
        }
        matmul_acc(x, w, &mut out, rows, k, n);
        out
    }

    fn lin(&self, x: &[f64], rows: usize, l: Linear) -> Vec<f64> {
        self.linear_rows(x, rows, l, self.p(l.w))
    }

    fn q_weight(&self, at: Attn) -> &[f64] {
        match &self.merged {
            Some(m) => &m[at.slot].0,
            None => self.p(at.q.w),
        }
    }

    fn v_weight(&self, at: Attn) -> &[f64] {
        match &self.merged {
            Some(m) => &m[at.slot].1,
            None => self.p(at.v.w),
        }
    }

    fn norm_rows(&self, x: &[f64], rows: usize, g: usize, b: usize) -> Vec<f64> {
        let d = x.len() / rows;
        x.chunks(d)
            .flat_map(|r| layer_norm_row(r, self.p(g), self.p(b), LN_EPS))
            .collect()
    }

    fn ff(&self, h: &[f64], rows: usize, ff1: Linear, ff2: Linear) -> Vec<f64> {
        let mut u = self.lin(h, rows, ff1);
        for v in u.iter_mut() {
            *v = crate::autodiff::gelu(*v);
        }
        self.lin(&u, rows, ff2)
    }

    /// Attention of `t` query rows over `s` key/value rows; `causal_offset`
    /// is the absolute position of the first query row when masking.
    fn attend(&self, q: &[f64], k: &[f64], v: &[f64], t: usize, s: usize, causal_offset: Option<usize>) -> Vec<f64> {
        let dims = self.view.model.dims();
        let (d, dh) = (dims.d_model, dims.head_dim());
        let scale = 1.0 / (dh as f64).sqrt();
        let mut out = vec![0.0; t * d];
        let mut scores = vec![0.0; s];
        for i in 0..t {
            for h in 0..dims.n_heads {
                let qi = &q[i * d + h * dh..i * d + (h + 1) * dh];
                for j in 0..s {
                    let kj = &k[j * d + h * dh..j * d + (h + 1) * dh];
                    scores[j] = tensor::dot(qi, kj) * scale;
                    if let Some(off) = causal_offset {
                        if j > off + i {
                            scores[j] += crate::policy::forward::MASKED;
                        }
                    }
                }
                tensor::softmax_in_place(&mut scores);
                let o = &mut out[i * d + h * dh..i * d + (h + 1) * dh];
                for j in 0..s {
                    let vj = &v[j * d + h * dh..j * d + (h + 1) * dh];
                    for (x, y) in o.iter_mut().zip(vj) {
                        *x += scores[j] * y;
                    }
                }
            }
        }
        out
    }

    fn embed(&self, ids: &[usize], offset: usize) -> Result<Vec<f64>> {
        let m = self.view.model;
        m.vocab().check(ids)?;
        let d = m.dims().d_model;
        if offset + ids.len() > m.dims().max_positions {
            return Err(crate::error::Error::InvalidSequence(format!(
                "position {} exceeds {} positions",
                offset + ids.len(),
                m.dims().max_positions
            )));
        }
        let emb = self.p(m.layout.emb);
        let mut x = Vec::with_capacity(ids.len() * d);
        for (p, &id) in ids.iter().enumerate() {
            let pe = position_row(offset + p, d);
            x.extend(emb[id * d..(id + 1) * d].iter().zip(pe).map(|(e, p)| e + p));
        }
        Ok(x)
    }

    pub fn encode(&self, src: &[usize]) -> Result<Encoded> {
        let m = self.view.model;
        let s = src.len();
        let mut x = self.embed(src, 0)?;
        for blk in &m.layout.enc {
            let h = self.norm_rows(&x, s, blk.ln1.g, blk.ln1.b);
            let q = self.linear_rows(&h, s, blk.attn.q, self.q_weight(blk.attn));
            let k = self.lin(&h, s, blk.attn.k);
            let v = self.linear_rows(&h, s, blk.attn.v, self.v_weight(blk.attn));
            let a = self.attend(&q, &k, &v, s, s, None);
            let a = self.lin(&a, s, blk.attn.o);
            x.iter_mut().zip(&a).for_each(|(x, a)| *x += a);
            let h = self.norm_rows(&x, s, blk.ln2.g, blk.ln2.b);
            let f = self.ff(&h, s, blk.ff1, blk.ff2);
            x.iter_mut().zip(&f).for_each(|(x, f)| *x += f);
        }
        let memory = self.norm_rows(&x, s, m.layout.enc_norm.g, m.layout.enc_norm.b);
        let mut cross_k = Vec::new();
        let mut cross_v = Vec::new();
        for blk in &m.layout.dec {
            cross_k.push(self.lin(&memory, s, blk.cross.k));
            cross_v.push(self.linear_rows(&memory, s, blk.cross.v, self.v_weight(blk.cross)));
        }
        Ok(Encoded {
            memory,
            len: s,
            cross_k,
            cross_v,
        })
    }

    pub fn start(&self) -> DecoderState {
        let n = self.view.model.layout.dec.len();
        DecoderState {
            self_k: vec![Vec::new(); n],
            self_v: vec![Vec::new(); n],
            len: 0,
        }
    }

    /// Feeds `ids` (one or more tokens) and returns logits for each row.
    pub fn feed(&self, enc: &Encoded, st: &mut DecoderState, ids: &[usize]) -> Result<Vec<f64>> {
        let m = self.view.model;
        let t = ids.len();
        let d = m.dims().d_model;
        let mut x = self.embed(ids, st.len)?;
        for (l, blk) in m.layout.dec.iter().enumerate() {
            let h = self.norm_rows(&x, t, blk.ln1.g, blk.ln1.b);
            let q = self.linear_rows(&h, t, blk.self_attn.q, self.q_weight(blk.self_attn));
            let k = self.lin(&h, t, blk.self_attn.k);
            let v = self.linear_rows(&h, t, blk.self_attn.v, self.v_weight(blk.self_attn));
            st.self_k[l].extend_from_slice(&k);
            st.self_v[l].extend_from_slice(&v);
            let s = st.self_k[l].len() / d;
            let a = self.attend(&q, &st.self_k[l], &st.self_v[l], t, s, Some(st.len));
            let a = self.lin(&a, t, blk.self_attn.o);
            x.iter_mut().zip(&a).for_each(|(x, a)| *x += a);
            let h = self.norm_rows(&x, t, blk.ln2.g, blk.ln2.b);
            let q = self.linear_rows(&h, t, blk.cross.q, self.q_weight(blk.cross));
            let c = self.attend(&q, &enc.cross_k[l], &enc.cross_v[l], t, enc.len, None);
            let c = self.lin(&c, t, blk.cross.o);
            x.iter_mut().zip(&c).for_each(|(x, c)| *x += c);
            let h = self.norm_rows(&x, t, blk.ln3.g, blk.ln3.b);
            let f = self.ff(&h, t, blk.ff1, blk.ff2);
            x.iter_mut().zip(&f).for_each(|(x, f)| *x += f);
        }
        st.len += t;
        let h = self.norm_rows(&x, t, m.layout.dec_norm.g, m.layout.dec_norm.b);
        Ok(self.lin(&h, t, m.layout.out))
    }
}
