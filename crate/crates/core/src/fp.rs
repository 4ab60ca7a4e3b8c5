//! Probability fractions: per token, per sample, and over a corpus.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scorer::Scorer;
use crate::types::{SampleScore, ScorerInfo, TokenScore};

/// `p_actual / p_max` for a valid probability pair.
pub fn token_fp(p_actual: f64, p_max: f64) -> Result<f64> {
    if !(p_actual > 0.0 && p_actual <= p_max && p_max <= 1.0) {
        return Err(Error::InvalidProbabilityPair { p_actual, p_max });
    }
    Ok(p_actual / p_max)
}

/// Mean token fraction of one sample.
pub fn sample_fp(token_scores: &[TokenScore]) -> Result<f64> {
    if token_scores.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(token_scores.iter().map(|t| t.fp).sum::<f64>() / token_scores.len() as f64)
}

pub fn score_sample(scorer: &dyn Scorer, tokens: &[String], sample_id: &str) -> Result<SampleScore> {
    score_continuation(scorer, tokens, 0, sample_id)
}

/// Scores `tokens` but keeps only positions from `skip` on.
///
/// The skipped prefix still conditions the kept positions.
pub fn score_continuation(scorer: &dyn Scorer, tokens: &[String], skip: usize, sample_id: &str) -> Result<SampleScore> {
    if tokens.len() <= skip {
        return Err(Error::EmptySample);
    }
    let scores = scorer.score(tokens)?;
    assemble(scorer, sample_id, tokens[skip..].to_vec(), scores[skip..].to_vec())
}

/// Scores many `(sample_id, tokens)` pairs in one batch, querying the
/// backend identity once.
pub fn score_samples(scorer: &dyn Scorer, samples: &[(String, Vec<String>)]) -> Result<Vec<SampleScore>> {
    if samples.iter().any(|(_, t)| t.is_empty()) {
        return Err(Error::EmptySample);
    }
    let info = scorer.info()?;
    let texts: Vec<Vec<String>> = samples.iter().map(|(_, t)| t.clone()).collect();
    let scores = scorer.score_batch(&texts)?;
    samples
        .iter()
        .zip(scores)
        .map(|((id, tokens), ts)| assemble_with(info.clone(), id, tokens.clone(), ts))
        .collect()
}

/// Builds a [`SampleScore`] from already computed token scores.
pub fn assemble(
    scorer: &dyn Scorer,
    sample_id: &str,
    tokens: Vec<String>,
    token_scores: Vec<TokenScore>,
) -> Result<SampleScore> {
    assemble_with(scorer.info()?, sample_id, tokens, token_scores)
}

pub fn assemble_with(
    backend: ScorerInfo,
    sample_id: &str,
    tokens: Vec<String>,
    token_scores: Vec<TokenScore>,
) -> Result<SampleScore> {
    if tokens.len() != token_scores.len() {
        return Err(Error::LengthMismatch {
            left: tokens.len(),
            right: token_scores.len(),
        });
    }
    let fp_s = sample_fp(&token_scores)?;
    Ok(SampleScore {
        sample_id: sample_id.to_owned(),
        k: token_scores.len(),
        tokens,
        token_scores,
        fp_s,
        backend,
    })
}

/// Mean/spread summary of per-sample fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpSummary {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1); 0 for a single value.
    pub stdev: f64,
    pub min: f64,
    pub max: f64,
    /// Set when `count == 1` and the stdev is the 0 convention.
    pub degenerate_stdev: bool,
}

impl FpSummary {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("fp summary needs at least one sample"));
        }
        let n = values.len();
        let (min, max) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        // Offsetting by the minimum keeps constant inputs exact.
        let offset = values.iter().map(|v| v - min).sum::<f64>() / n as f64;
        let mean = (min + offset).clamp(min, max);
        let stdev = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Ok(Self {
            count: n,
            mean,
            stdev,
            min,
            max,
            degenerate_stdev: n == 1,
        })
    }
}

/// Renders as `mean (stdev)` with three decimals, e.g. `0.101 (0.093)`.
impl fmt::Display for FpSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3} ({:.3})", self.mean, self.stdev)
    }
}

/// Summary over per-sample `fp_s` values (samples weigh equally, tokens do not).
pub fn corpus_mean_fp(samples: &[SampleScore]) -> Result<FpSummary> {
    FpSummary::from_values(&samples.iter().map(|s| s.fp_s).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ScorerInfo;
    use proptest::prelude::*;

    fn ts(fp: f64) -> TokenScore {
        TokenScore::new(fp * 0.5, 0.5, if fp == 1.0 { 1 } else { 2 }, 0.5)
    }

    fn sample(fp_s: f64) -> SampleScore {
        SampleScore {
            sample_id: String::new(),
            k: 1,
            tokens: vec![],
            token_scores: vec![ts(fp_s)],
            fp_s,
            backend: ScorerInfo {
                backend_name: "t".into(),
                vocab_size: 2,
                model_fingerprint: "0".into(),
            },
        }
    }

    #[test]
    fn token_fractions() {
        assert_eq!(token_fp(0.3, 0.3).unwrap(), 1.0);
        assert!((token_fp(0.1, 0.4).unwrap() - 0.25).abs() < 1e-15);
        assert!(matches!(token_fp(0.4, 0.1), Err(Error::InvalidProbabilityPair { .. })));
        assert!(token_fp(0.0, 0.1).is_err());
        assert!(token_fp(0.5, 1.5).is_err());
    }

    #[test]
    fn sample_means() {
        assert_eq!(sample_fp(&[ts(1.0)]).unwrap(), 1.0);
        assert_eq!(sample_fp(&[ts(0.5), ts(1.0)]).unwrap(), 0.75);
        assert!(matches!(sample_fp(&[]), Err(Error::EmptySample)));
    }

    #[test]
    fn corpus_summary() {
        let s = corpus_mean_fp(&[sample(0.2), sample(0.4)]).unwrap();
        assert!((s.mean - 0.3).abs() < 1e-15);
        let one = corpus_mean_fp(&[sample(0.7)]).unwrap();
        assert_eq!(one.stdev, 0.0);
        assert!(one.degenerate_stdev);
        assert!(corpus_mean_fp(&[]).is_err());
    }

    #[test]
    fn mean_std_rendering() {
        let s = FpSummary {
            count: 2,
            mean: 0.101,
            stdev: 0.093,
            min: 0.0,
            max: 1.0,
            degenerate_stdev: false,
        };
        assert_eq!(s.to_string(), "0.101 (0.093)");
        let s = FpSummary {
            mean: 0.336,
            stdev: 0.28,
            ..s
        };
        assert_eq!(s.to_string(), "0.336 (0.280)");
    }

    #[test]
    fn duplicating_a_sample_pulls_the_mean() {
        let base = [sample(0.2), sample(0.6)];
        let dup = [sample(0.2), sample(0.6), sample(0.6)];
        let (a, b) = (corpus_mean_fp(&base).unwrap(), corpus_mean_fp(&dup).unwrap());
        assert!(b.mean > a.mean && b.mean < 0.6);
    }

    proptest! {
        #[test]
        fn concatenation_is_weighted_mean(
            a in proptest::collection::vec(0.001f64..=1.0, 1..20),
            b in proptest::collection::vec(0.001f64..=1.0, 1..20),
        ) {
            let sa: Vec<_> = a.iter().map(|&v| sample(v)).collect();
            let sb: Vec<_> = b.iter().map(|&v| sample(v)).collect();
            let both: Vec<_> = sa.iter().chain(&sb).cloned().collect();
            let (x, y, z) = (corpus_mean_fp(&sa).unwrap(), corpus_mean_fp(&sb).unwrap(), corpus_mean_fp(&both).unwrap());
            let weighted = (x.mean * x.count as f64 + y.mean * y.count as f64) / (x.count + y.count) as f64;
            prop_assert!((z.mean - weighted).abs() < 1e-12);
            prop_assert!(z.min <= z.mean && z.mean <= z.max && z.stdev >= 0.0);
        }
    }
}
