//! Fixtures shared by the benchmarks.

use fpscore::ngram::{NgramConfig, NgramModel};
use fpscore::tokenizer::{tokenize, Vocabulary};

/// Deterministic pseudo-text: a small Zipf-ish vocabulary driven by an LCG.
pub fn synthetic_corpus(lines: usize, words_per_line: usize) -> Vec<String> {
    let words = [
        "the",
        "of",
        "and",
        "to",
        "a",
        "in",
        "we",
        "our",
        "that",
        "is",
        "for",
        "nation",
        "people",
        "will",
        "must",
        "congress",
        "world",
        "new",
        "peace",
        "america",
        "freedom",
        "work",
        "year",
        "government",
        "economy",
    ];
    let mut state: u64 = 0x2545_f491_4f6c_dd1d;
    (0..lines)
        .map(|_| {
            (0..words_per_line)
                .map(|_| {
                    state = state
                        .wrapping_mul(6_364_136_223_846_793_005)
                        .wrapping_add(1_442_695_040_888_963_407);
                    let r = (state >> 33) as usize % (words.len() * words.len());
                    words[(r as f64).sqrt() as usize % words.len()]
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

/// Trains a model of the given order on [`synthetic_corpus`].
pub fn trained_model(order: usize) -> NgramModel {
    let corpus: Vec<Vec<String>> = synthetic_corpus(500, 40).iter().map(|l| tokenize(l)).collect();
    let vocab = Vocabulary::build(&corpus, 1).expect("non-empty corpus");
    let ids: Vec<Vec<u32>> = corpus.iter().map(|t| vocab.encode(t)).collect();
    NgramModel::train(&ids, vocab, NgramConfig::with_order(order)).expect("valid config")
}
