//! Evaluation metrics and statistics.

mod bleu;
mod bootstrap;
pub mod chrf;
mod corr;
mod fixture;
mod forgetting;

use serde::{Deserialize, Serialize};

pub use bleu::{bleu, BleuStats, BleuTokenizer};
pub use bootstrap::{paired_bootstrap, paired_bootstrap_by, resample_indices, SignificanceResult};
pub use chrf::{chrf_pp, sentence_chrf, ChrfStats};
pub use corr::{average_ranks, pearson, spearman, PValueMethod, Spearman, EXACT_PERMUTATION_MAX_N};
pub use fixture::{headroom_fixture, parse_fixture, FixtureRow, FIXTURE_CSV, FIXTURE_RHO_EXCLUDED, FIXTURE_RHO_FULL};
pub use forgetting::{forgetting_audit, ForgettingEvent, ForgettingReport, DEFAULT_THRESHOLD};

/// Corpus value plus per-sentence values of one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    pub name: String,
    pub corpus: f64,
    pub sentences: Vec<f64>,
}
