//! Benchmark-agnostic evaluation of language models on multiple-choice
//! question banks: ingestion and dedup of MMLU-style datasets, 5-shot
//! evaluation with strict exact-match scoring, per-question difficulty
//! estimation from the cross-model response matrix, PRO subset filtering,
//! a proposer/verifier loop that generates and validates natural-language
//! difficulty descriptions, and report/chart emission.

pub mod config;
pub mod corpus;
pub mod difficulty;
pub mod evaluator;
pub mod gateway;
pub mod interpret;
pub mod pipeline;
pub mod report;
pub mod seed;

pub use config::RunConfig;
pub use corpus::{Benchmark, Label, Question};
pub use difficulty::{DifficultyPartition, ProFilterResult};
pub use evaluator::{ResponseMatrix, ResponseRecord};
pub use gateway::{Completion, Decoding, Gateway, ModelSpec, Role};
pub use interpret::{DescriptionSet, GroupSplit, VerifierResult};
pub use report::{PublishedTable, TrendFit};
