#![allow(dead_code)]

use mtgrpo::grpo::GroupInput;
use mtgrpo::harness::ExperimentConfig;
use mtgrpo::policy::{sample_group, LoraConfig, ModelDims, PolicyModel, Vocabulary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub mod oracle;

pub const TAG: &str = "<2x>";

pub fn tiny_model(seed: u64) -> PolicyModel {
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
    let vocab = Vocabulary::new([TAG.to_string()], "abc ".chars()).unwrap();
    PolicyModel::init(dims, lora, vocab, seed).unwrap()
}

pub fn random_source(r: &mut ChaCha8Rng, max_len: usize) -> String {
    let n = r.random_range(1..=max_len);
    (0..n).map(|_| ['a', 'b', 'c', ' '][r.random_range(0..4)]).collect::<String>()
}

/// A group sampled from the adapted policy with random rewards.
pub fn random_group(model: &PolicyModel, seed: u64, k: usize, max_tokens: usize) -> GroupInput {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let src = random_source(&mut r, 6);
    let prompt = model.prompt(TAG, &src).unwrap();
    let hypotheses = sample_group(model.view(true), model.view(false), &prompt, k, 1.0, max_tokens, seed).unwrap();
    let rewards = (0..k).map(|_| r.random::<f64>()).collect();
    GroupInput {
        prompt,
        hypotheses,
        rewards,
    }
}

/// A one-task configuration small enough for end-to-end runs in seconds.
pub fn small_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.model.dims.d_model = 16;
    c.model.dims.n_heads = 2;
    c.model.dims.d_ff = 24;
    c.model.dims.n_enc = 1;
    c.model.dims.n_dec = 1;
    c.model.lora.rank = 2;
    c.model.lora.alpha = 4.0;
    c.corpus.train = 12;
    c.corpus.eval = 4;
    c.corpus.devtest = 6;
    c.corpus.pretrain_pool = 40;
    c.pretrain.steps = 10;
    c.grpo.k = 3;
    c.grpo.steps = 2;
    c.grpo.eval_every = 1;
    c.grpo.eval_subset = 4;
    c.grpo.max_train_tokens = 12;
    c.grpo.max_eval_tokens = 20;
    c.grpo.beam_width = 2;
    c.sft.epochs = 1;
    c.sft.eval_every = 2;
    c.sft.eval_subset = 4;
    c.sft.max_eval_tokens = 20;
    c.sft.beam_width = 2;
    c.stats.bootstrap_resamples = 50;
    c
}
