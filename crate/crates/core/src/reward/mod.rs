//! Reference-free reward stack: hashed n-gram embedding similarity, a
//! ground-truth-assisted QE proxy, their weighted hybrid and the
//! quality-cline discriminability diagnostic.

mod cline;
mod embed;
mod hybrid;

pub use cline::{
    build_quality_cline, discriminability, discriminability_of, score_cline, write_cline_csv, ClineCandidate,
    ClineItem, ClineScore, DegradeConfig, QualityCline, CLINE_LEVELS,
};
pub use embed::{embed_similarity_reward, fnv1a, hashed_ngrams, HASH_DIM, MAX_N, MIN_N};
pub use hybrid::{check_weights, hybrid_reward, qe_proxy_reward, HybridReward, Reward, RewardBundle, RewardComponent};
