//! Parameters of the encoder-decoder policy and its LoRA adapters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::policy::vocab::Vocabulary;
use crate::rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelDims {
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub n_enc: usize,
    pub n_dec: usize,
    /// Longest encoder or decoder sequence the position table covers.
    pub max_positions: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            d_model: 64,
            n_heads: 4,
            d_ff: 128,
            n_enc: 2,
            n_dec: 2,
            max_positions: 160,
        }
    }
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.d_model,
            self.n_heads,
            self.d_ff,
            self.n_enc,
            self.n_dec,
            self.max_positions,
        ];
        if positive.contains(&0) {
            return Err(Error::InvalidArgument("model dims must be positive".into()));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "d_model {} not divisible by {} heads",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoraConfig {
    pub rank: usize,
    pub alpha: f64,
    pub dropout: f64,
}

impl Default for LoraConfig {
    fn default() -> Self {
        LoraConfig {
            rank: 16,
            alpha: 32.0,
            dropout: 0.05,
        }
    }
}

impl LoraConfig {
    pub fn scale(&self) -> f64 {
        self.alpha / self.rank as f64
    }
}

/// Named flat list of tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub(crate) fn from_parts(names: Vec<String>, tensors: Vec<Tensor>) -> Self {
        ParamStore { names, tensors }
    }

    fn push(&mut self, name: String, t: Tensor) -> usize {
        self.names.push(name);
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, i: usize) -> &Tensor {
        &self.tensors[i]
    }

    pub fn n_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// All values concatenated in store order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    /// SHA-256 over names, shapes and little-endian values.
    pub fn sha256(&self) -> String {
        let mut h = Sha256::new();
        for (n, t) in self.names.iter().zip(&self.tensors) {
            h.update(n.as_bytes());
            for &d in t.shape() {
                h.update((d as u64).to_le_bytes());
            }
            for &v in t.data() {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Replaces the values, keeping names; shapes must match exactly.
    pub fn replace(&mut self, other: ParamStore) -> Result<()> {
        if other.names != self.names {
            return Err(Error::Checkpoint("parameter names differ from layout".into()));
        }
        for (a, b) in self.tensors.iter().zip(&other.tensors) {
            if a.shape() != b.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter shape {:?} differs from layout {:?}",
                    b.shape(),
                    a.shape()
                )));
            }
        }
        self.tensors = other.tensors;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Linear {
    pub w: usize,
    pub b: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Norm {
    pub g: usize,
    pub b: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Attn {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    /// Index of this block's adapter slot.
    pub slot: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct EncBlock {
    pub ln1: Norm,
    pub attn: Attn,
    pub ln2: Norm,
    pub ff1: Linear,
    pub ff2: Linear,
}

#[derive(Debug, Clone)]
pub(crate) struct DecBlock {
    pub ln1: Norm,
    pub self_attn: Attn,
    pub ln2: Norm,
    pub cross: Attn,
    pub ln3: Norm,
    pub ff1: Linear,
    pub ff2: Linear,
}

/// Adapter indices for one attention block: `(A, B)` pairs on q and v.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LoraSlot {
    pub qa: usize,
    pub qb: usize,
    pub va: usize,
    pub vb: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub emb: usize,
    pub enc: Vec<EncBlock>,
    pub enc_norm: Norm,
    pub dec: Vec<DecBlock>,
    pub dec_norm: Norm,
    pub out: Linear,
    pub slots: Vec<LoraSlot>,
}

enum Init {
    Uniform(f64),
    Zeros,
    Ones,
}

struct Builder {
    store: ParamStore,
    rng: ChaCha8Rng,
}

impl Builder {
    fn add(&mut self, name: String, shape: &[usize], init: Init) -> usize {
        let n: usize = shape.iter().product();
        let data = match init {
            Init::Uniform(a) => (0..n).map(|_| self.rng.random_range(-a..a)).collect(),
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
        };
        let t = Tensor::new(shape.to_vec(), data).expect("builder shapes are valid");
        self.store.push(name, t)
    }

    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Linear {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Linear {
            w: self.add(format!("{name}.w"), &[fan_in, fan_out], Init::Uniform(a)),
            b: self.add(format!("{name}.b"), &[fan_out], Init::Zeros),
        }
    }

    fn norm(&mut self, name: &str, d: usize) -> Norm {
        Norm {
            g: self.add(format!("{name}.g"), &[d], Init::Ones),
            b: self.add(format!("{name}.b"), &[d], Init::Zeros),
        }
    }

    fn attn(&mut self, name: &str, d: usize, slot: usize) -> Attn {
        Attn {
            q: self.linear(&format!("{name}.q"), d, d),
            k: self.linear(&format!("{name}.k"), d, d),
            v: self.linear(&format!("{name}.v"), d, d),
            o: self.linear(&format!("{name}.o"), d, d),
            slot,
        }
    }
}

fn build(dims: &ModelDims, lora: &LoraConfig, vocab_size: usize, seed: u64) -> (Layout, ParamStore, ParamStore) {
    let d = dims.d_model;
    let mut b = Builder {
        store: ParamStore::new(),
        rng: ChaCha8Rng::seed_from_u64(rng::derive_seed(seed, &[rng::label("base")])),
    };
    let emb = b.add("emb".into(), &[vocab_size, d], Init::Uniform(3f64.sqrt()));
    let mut slot = 0;
    let mut enc = Vec::new();
    for l in 0..dims.n_enc {
        let p = format!("enc{l}");
        enc.push(EncBlock {
            ln1: b.norm(&format!("{p}.ln1"), d),
            attn: b.attn(&format!("{p}.attn"), d, slot),
            ln2: b.norm(&format!("{p}.ln2"), d),
            ff1: b.linear(&format!("{p}.ff1"), d, dims.d_ff),
            ff2: b.linear(&format!("{p}.ff2"), dims.d_ff, d),
        });
        slot += 1;
    }
    let enc_norm = b.norm("enc.ln", d);
    let mut dec = Vec::new();
    for l in 0..dims.n_dec {
        let p = format!("dec{l}");
        let ln1 = b.norm(&format!("{p}.ln1"), d);
        let self_attn = b.attn(&format!("{p}.self"), d, slot);
        let ln2 = b.norm(&format!("{p}.ln2"), d);
        let cross = b.attn(&format!("{p}.cross"), d, slot + 1);
        slot += 2;
        dec.push(DecBlock {
            ln1,
            self_attn,
            ln2,
            cross,
            ln3: b.norm(&format!("{p}.ln3"), d),
            ff1: b.linear(&format!("{p}.ff1"), d, dims.d_ff),
            ff2: b.linear(&format!("{p}.ff2"), dims.d_ff, d),
        });
    }
    let dec_norm = b.norm("dec.ln", d);
    let out = b.linear("out", d, vocab_size);
    let base = std::mem::replace(&mut b.store, ParamStore::new());

    b.rng = ChaCha8Rng::seed_from_u64(rng::derive_seed(seed, &[rng::label("lora")]));
    let r = lora.rank;
    let a = 1.0 / (d as f64).sqrt();
    let mut slots = Vec::new();
    for s in 0..slot {
        slots.push(LoraSlot {
            qa: b.add(format!("lora{s}.q.a"), &[d, r], Init::Uniform(a)),
            qb: b.add(format!("lora{s}.q.b"), &[r, d], Init::Zeros),
            va: b.add(format!("lora{s}.v.a"), &[d, r], Init::Uniform(a)),
            vb: b.add(format!("lora{s}.v.b"), &[r, d], Init::Zeros),
        });
    }
    let layout = Layout {
        emb,
        enc,
        enc_norm,
        dec,
        dec_norm,
        out,
        slots,
    };
    (layout, base, b.store)
}

/// Encoder-decoder policy. With adapters enabled it is π_θ, with adapters
/// disabled it is the frozen reference π_ref.
#[derive(Debug, Clone)]
pub struct PolicyModel {
    dims: ModelDims,
    lora: LoraConfig,
    vocab: Vocabulary,
    pub(crate) layout: Layout,
    base: ParamStore,
    adapters: ParamStore,
    adapters_enabled: bool,
}

/// Borrowed π_θ or π_ref view of a model.
#[derive(Debug, Clone, Copy)]
pub struct PolicyView<'a> {
    pub model: &'a PolicyModel,
    pub adapters: bool,
}

impl PolicyModel {
    /// Deterministic initialisation. Adapter `B` matrices start at zero.
    pub fn init(dims: ModelDims, lora: LoraConfig, vocab: Vocabulary, seed: u64) -> Result<Self> {
        dims.validate()?;
        if lora.rank == 0 || !(0.0..1.0).contains(&lora.dropout) {
            return Err(Error::InvalidArgument(
                "lora rank must be positive and dropout in [0, 1)".into(),
            ));
        }
        let (layout, base, adapters) = build(&dims, &lora, vocab.len(), seed);
        Ok(PolicyModel {
            dims,
            lora,
            vocab,
            layout,
            base,
            adapters,
            adapters_enabled: true,
        })
    }

    /// Rebuilds a model from stored parameters, checking them against the
    /// layout implied by `dims`, `lora` and `vocab`.
    pub fn from_parts(
        dims: ModelDims,
        lora: LoraConfig,
        vocab: Vocabulary,
        base: ParamStore,
        adapters: ParamStore,
    ) -> Result<Self> {
        let mut m = PolicyModel::init(dims, lora, vocab, 0)?;
        m.base.replace(base)?;
        m.adapters.replace(adapters)?;
        Ok(m)
    }

    pub fn dims(&self) -> &ModelDims {
        &self.dims
    }

    pub fn lora(&self) -> &LoraConfig {
        &self.lora
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn base(&self) -> &ParamStore {
        &self.base
    }

    pub fn adapters(&self) -> &ParamStore {
        &self.adapters
    }

    /// Mutable base weights, for pretraining only.
    pub fn base_mut(&mut self) -> &mut ParamStore {
        &mut self.base
    }

    pub fn adapters_mut(&mut self) -> &mut ParamStore {
        &mut self.adapters
    }

    pub fn base_hash(&self) -> String {
        self.base.sha256()
    }

    pub fn adapters_enabled(&self) -> bool {
        self.adapters_enabled
    }

    pub fn set_adapters(&mut self, enabled: bool) {
        self.adapters_enabled = enabled;
    }

    /// π_θ (`true`) or π_ref (`false`) without copying any weights.
    pub fn view(&self, adapters: bool) -> PolicyView<'_> {
        PolicyView {
            model: self,
            adapters,
        }
    }

    pub fn current(&self) -> PolicyView<'_> {
        self.view(self.adapters_enabled)
    }

    /// Resets every adapter to its initial state (`B = 0`).
    pub fn reset_adapters(&mut self, seed: u64) {
        let (_, _, fresh) = build(&self.dims, &self.lora, self.vocab.len(), seed);
        self.adapters = fresh;
    }

    /// True when every `B` matrix is zero.
    pub fn adapters_are_identity(&self) -> bool {
        self.layout.slots.iter().all(|s| {
            [s.qb, s.vb]
                .iter()
                .all(|&i| self.adapters.get(i).data().iter().all(|&v| v == 0.0))
        })
    }

    /// Fills every `B` matrix with uniform noise of amplitude `scale`.
    pub fn perturb_adapters(&mut self, seed: u64, scale: f64) {
        let mut r = rng::stream(seed, &[rng::label("perturb")]);
        let slots = self.layout.slots.clone();
        for s in slots {
            for i in [s.qb, s.vb] {
                for v in self.adapters.tensors_mut()[i].data_mut() {
                    *v = r.random_range(-scale..scale);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocabulary {
        Vocabulary::new(vec!["<2t>".into()], "abc ".chars()).unwrap()
    }

    #[test]
    fn init_is_deterministic() {
        let a = PolicyModel::init(ModelDims::default(), LoraConfig::default(), vocab(), 5).unwrap();
        let b = PolicyModel::init(ModelDims::default(), LoraConfig::default(), vocab(), 5).unwrap();
        assert_eq!(a.base, b.base);
        assert_eq!(a.adapters, b.adapters);
        assert_eq!(a.base_hash(), b.base_hash());
        let c = PolicyModel::init(ModelDims::default(), LoraConfig::default(), vocab(), 6).unwrap();
        assert_ne!(a.base_hash(), c.base_hash());
        assert!(a.adapters_are_identity());
    }

    #[test]
    fn one_slot_per_attention_block() {
        let m = PolicyModel::init(ModelDims::default(), LoraConfig::default(), vocab(), 1).unwrap();
        assert_eq!(m.layout.slots.len(), 2 + 2 * 2);
        assert_eq!(m.adapters().len(), 4 * 6);
    }

    #[test]
    fn rejects_bad_dims() {
        let dims = ModelDims {
            d_model: 30,
            n_heads: 4,
            ..ModelDims::default()
        };
        assert!(PolicyModel::init(dims, LoraConfig::default(), vocab(), 1).is_err());
    }
}

impl PolicyModel {
    /// Encoder prompt for `text` translated into the task tagged `tag`.
    pub fn prompt(&self, tag: &str, text: &str) -> Result<crate::policy::Prompt> {
        let id = self
            .vocab
            .tag_id(tag)
            .ok_or_else(|| Error::InvalidArgument(format!("tag `{tag}` not in vocabulary")))?;
        Ok(crate::policy::Prompt::new(self.vocab.encode(text), id))
    }

    /// `BOS + chars + EOS` token ids of a target text.
    pub fn target_ids(&self, text: &str) -> Vec<usize> {
        let mut t = vec![crate::policy::BOS];
        t.extend(self.vocab.encode(text));
        t.push(crate::policy::EOS);
        t
    }
}
