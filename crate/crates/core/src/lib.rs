//! Naturalness scoring of generated text through probability fractions.
//!
//! A discriminator language model assigns every position of a text a
//! fraction `Fp = p(observed) / max_w p(w)`. Averaged over a sample, low
//! values indicate words drawn from the tail of the distribution (typical of
//! human text), high values indicate head-of-distribution choices (typical
//! of sampled machine text). Thresholds on the sample average label samples
//! `h`, `m` or `u`, and the share of `h` labels is a system's h score.

pub mod error;
pub mod experiment;
pub mod fp;
pub mod naturalness;
pub mod ngram;
pub mod report;
pub mod scorer;
pub mod stats;
pub mod tokenizer;
pub mod types;

pub use error::{Error, Result};
pub use fp::{corpus_mean_fp, sample_fp, score_sample, token_fp, FpSummary};
pub use naturalness::{
    calibrate_dual, calibrate_single, classify_dual, classify_single, evaluate_system, h_score_three_class,
    h_score_two_class,
};
pub use ngram::{NgramConfig, NgramModel};
pub use scorer::{NgramScorer, RemoteScorer, Scorer};
pub use stats::{paired_compare, PairedComparison};
pub use tokenizer::{tokenize, Vocabulary};
pub use types::{
    validate_sample_score, ClassLabel, CorpusResult, SampleScore, ScorerInfo, ThresholdConfig, Thresholds, Token,
    TokenId, TokenScore, Violation,
};
