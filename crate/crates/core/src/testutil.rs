use crate::policy::{LoraConfig, ModelDims, PolicyModel, Vocabulary};

pub(crate) fn tiny_model(seed: u64) -> PolicyModel {
    let dims = ModelDims {
        d_model: 16,
        n_heads: 2,
        d_ff: 24,
        n_enc: 1,
        n_dec: 1,
        max_positions: 48,
    };
    let lora = LoraConfig {
        rank: 2,
        alpha: 4.0,
        dropout: 0.05,
    };
    let vocab = Vocabulary::new(vec!["<2x>".to_string()], "abc ".chars()).unwrap();
    PolicyModel::init(dims, lora, vocab, seed).unwrap()
}
