//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use fpscore::ngram::{NgramConfig, NgramModel, BOS_ID};
use fpscore::tokenizer::{tokenize, Vocabulary, EOS_ID};

/// Three small fixed corpora, each well under 200 tokens.
pub const CORPORA: [&str; 3] = [
    "the cat sat on the mat\nthe dog sat on the log\nthe cat saw the dog",
    "we will work . we will win . we work and we win and they work\nthey will see what we see",
    "a b a b a c\nc c a\nb a c a b\na\nb b b a c c a",
];

pub fn lines(text: &str) -> Vec<Vec<String>> {
    text.lines().map(tokenize).filter(|t| !t.is_empty()).collect()
}

pub fn train(text: &str, order: usize) -> (NgramModel, Vec<Vec<u32>>) {
    let corpus = lines(text);
    let vocab = Vocabulary::build(&corpus, 1).unwrap();
    let ids: Vec<Vec<u32>> = corpus.iter().map(|t| vocab.encode(t)).collect();
    let model = NgramModel::train(&ids, vocab, NgramConfig::with_order(order)).unwrap();
    (model, ids)
}

/// Brute-force interpolated probability by scanning the padded corpus for
/// every count it needs.
pub struct CountingOracle {
    padded: Vec<Vec<u32>>,
    order: usize,
    lambda: f64,
    alpha: f64,
    vocab: usize,
}

impl CountingOracle {
    pub fn new(ids: &[Vec<u32>], order: usize, lambda: f64, alpha: f64, vocab: usize) -> Self {
        let padded = ids
            .iter()
            .map(|s| {
                let mut p = vec![BOS_ID; order - 1];
                p.extend(s);
                p.push(EOS_ID);
                p
            })
            .collect();
        Self {
            padded,
            order,
            lambda,
            alpha,
            vocab,
        }
    }

    /// Occurrences of `ctx` followed by `w` at predicted positions.
    fn count(&self, ctx: &[u32], w: Option<u32>) -> u64 {
        let mut n = 0;
        for s in &self.padded {
            for i in (self.order - 1)..s.len() {
                if i < ctx.len() {
                    continue;
                }
                if &s[i - ctx.len()..i] == ctx && w.is_none_or(|w| s[i] == w) {
                    n += 1;
                }
            }
        }
        n
    }

    /// `p_o(w | ctx)` where `ctx` holds exactly `o - 1` ids.
    pub fn prob(&self, w: u32, ctx: &[u32]) -> f64 {
        if ctx.is_empty() {
            let total = self.count(&[], None) as f64;
            return (self.count(&[], Some(w)) as f64 + self.alpha) / (total + self.alpha * self.vocab as f64);
        }
        let lower = self.prob(w, &ctx[1..]);
        let c_ctx = self.count(ctx, None);
        if c_ctx == 0 {
            return lower;
        }
        self.lambda * self.count(ctx, Some(w)) as f64 / c_ctx as f64 + (1.0 - self.lambda) * lower
    }

    /// History padded to `order - 1` ids, as the model sees it.
    pub fn history(&self, context: &[u32]) -> Vec<u32> {
        let keep = self.order - 1;
        let tail = &context[context.len().saturating_sub(keep)..];
        let mut h = vec![BOS_ID; keep - tail.len()];
        h.extend_from_slice(tail);
        h
    }
}

/// Fraction of correctly labeled samples when `v < t` means natural.
pub fn threshold_accuracy(natural: &[f64], synthetic: &[f64], t: f64) -> f64 {
    let ok = natural.iter().filter(|&&v| v < t).count() + synthetic.iter().filter(|&&v| v >= t).count();
    ok as f64 / (natural.len() + synthetic.len()) as f64
}

/// Fewest misclassifications over every distinct cut of the pooled values,
/// found by trying each value and a point above the maximum.
pub fn exhaustive_min_errors(natural: &[f64], synthetic: &[f64]) -> usize {
    let mut cuts: Vec<f64> = natural.iter().chain(synthetic).copied().collect();
    cuts.push(f64::INFINITY);
    cuts.iter()
        .map(|&t| natural.iter().filter(|&&v| v >= t).count() + synthetic.iter().filter(|&&v| v < t).count())
        .min()
        .unwrap()
}

/// Sign-flip p-value by plain enumeration of every sign vector.
pub fn enumerate_p(diffs: &[f64]) -> f64 {
    let n = diffs.len();
    let observed: f64 = diffs.iter().sum::<f64>().abs();
    let tol = 1e-12 * diffs.iter().map(|d| d.abs()).sum::<f64>();
    let mut hits = 0u64;
    for mask in 0u64..(1 << n) {
        let s: f64 = (0..n)
            .map(|i| if mask & (1 << i) != 0 { -diffs[i] } else { diffs[i] })
            .sum();
        if s.abs() >= observed - tol {
            hits += 1;
        }
    }
    hits as f64 / (1u64 << n) as f64
}
