//! Single-file checkpoint: magic, format version, JSON header, then raw
//! little-endian `f64` values of the base and adapter tensors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::model::{LoraConfig, ModelDims, ParamStore, PolicyModel};
use crate::policy::vocab::Vocabulary;
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"MTGRPOCK";
pub const FORMAT_VERSION: u32 = 1;

/// Random-stream position: every draw in a run derives from `(seed, step)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub step: u64,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: serde_json::Value,
    pub step: u64,
    pub rng: RngState,
    pub model: PolicyModel,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: serde_json::Value,
    dims: ModelDims,
    lora: LoraConfig,
    vocab: Vocabulary,
    step: u64,
    rng: RngState,
    adapters_enabled: bool,
    base: Vec<Entry>,
    adapters: Vec<Entry>,
}

fn entries(s: &ParamStore) -> Vec<Entry> {
    s.names()
        .iter()
        .zip(s.tensors())
        .map(|(n, t)| Entry {
            name: n.clone(),
            shape: t.shape().to_vec(),
        })
        .collect()
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let m = &self.model;
        let header = Header {
            config: self.config.clone(),
            dims: m.dims().clone(),
            lora: m.lora().clone(),
            vocab: m.vocab().clone(),
            step: self.step,
            rng: self.rng,
            adapters_enabled: m.adapters_enabled(),
            base: entries(m.base()),
            adapters: entries(m.adapters()),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(json.len() + 8 * (m.base().n_values() + m.adapters().n_values()) + 24);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for store in [m.base(), m.adapters()] {
            for t in store.tensors() {
                for v in t.data() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("missing checkpoint magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = bytes.get(20..20 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body)?;
        let mut pos = 20 + hlen;
        let mut read_store = |entries: &[Entry]| -> Result<ParamStore> {
            let mut names = Vec::new();
            let mut tensors = Vec::new();
            for e in entries {
                let n: usize = e.shape.iter().product();
                let raw = bytes
                    .get(pos..pos + 8 * n)
                    .ok_or_else(|| bad("truncated tensor data"))?;
                pos += 8 * n;
                let data = raw
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                names.push(e.name.clone());
                tensors.push(Tensor::new(e.shape.clone(), data)?);
            }
            Ok(ParamStore::from_parts(names, tensors))
        };
        let base = read_store(&header.base)?;
        let adapters = read_store(&header.adapters)?;
        if pos != bytes.len() {
            return Err(bad("trailing bytes after tensor data"));
        }
        let mut model = PolicyModel::from_parts(header.dims, header.lora, header.vocab, base, adapters)?;
        model.set_adapters(header.adapters_enabled);
        Ok(Checkpoint {
            config: header.config,
            step: header.step,
            rng: header.rng,
            model,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
        }
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let vocab = Vocabulary::new(vec!["<2t>".into()], "ab ".chars()).unwrap();
        let dims = ModelDims {
            d_model: 8,
            n_heads: 2,
            d_ff: 8,
            n_enc: 1,
            n_dec: 1,
            max_positions: 16,
        };
        let lora = LoraConfig {
            rank: 2,
            ..LoraConfig::default()
        };
        let mut model = PolicyModel::init(dims, lora, vocab, 3).unwrap();
        model.perturb_adapters(1, 0.1);
        let ck = Checkpoint {
            config: serde_json::json!({"k": 1}),
            step: 7,
            rng: RngState { seed: 9, step: 7 },
            model,
        };
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.model.base(), ck.model.base());
        assert_eq!(back.model.adapters(), ck.model.adapters());
        assert_eq!(back.rng, ck.rng);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        let mut corrupt = bytes.clone();
        corrupt[8] = 9;
        assert!(matches!(Checkpoint::from_bytes(&corrupt), Err(Error::Checkpoint(_))));
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}
