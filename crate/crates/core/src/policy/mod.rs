//! Tiny pre-LN transformer encoder-decoder with LoRA adapters on the query
//! and value projections of every attention block.
//!
//! Two forward routes exist: a tape route for training and a key/value
//! cached route for scoring and decoding. Tests pin them against each other.

mod checkpoint;
mod decode;
pub(crate) mod forward;
mod infer;
mod model;
mod vocab;

pub use checkpoint::{Checkpoint, RngState, FORMAT_VERSION};
pub use decode::{sample_decode, sample_group, Hypothesis};
pub use forward::{Prompt, Trainable};
pub use infer::{DecoderState, Encoded, Inference};
pub use model::{LoraConfig, ModelDims, ParamStore, PolicyModel, PolicyView};
pub use vocab::{Vocabulary, BOS, EOS, PAD, UNK};
