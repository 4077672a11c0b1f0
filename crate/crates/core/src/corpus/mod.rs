//! Synthetic transduction tasks, corpus generation and TSV ingestion.

mod generate;
mod task;
mod tsv;

pub use generate::{gen_corpus, read_corpus, write_corpus, Pair, SourceDistribution, SplitCorpus, SplitSizes};
pub use task::{gen_task, Difficulty, TaskSpec, Transduction, TransductionKind, SOURCE_ALPHABET};
pub use tsv::{load_tsv, parse_tsv, MalformedLine, TsvCorpus};
