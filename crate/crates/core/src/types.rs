//! Shared domain values: token scores, sample scores, backend identity,
//! decision thresholds and per-system results.
//!
//! All of these are plain immutable values once built and are `Send + Sync`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vocabulary index of a token.
pub type TokenId = u32;

/// Tolerance used when re-checking derived quantities (`fp`, means,
/// entropy bound) that go through floating-point arithmetic.
pub const VALIDATION_EPS: f64 = 1e-9;

/// One observed token: its surface form and its vocabulary index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub id: TokenId,
}

/// Scoring record for a single position of a text.
///
/// `fp` is the probability fraction `p_actual / p_max`: 1.0 for the most
/// likely token, close to 0 for tokens from the tail of the distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenScore {
    pub p_actual: f64,
    pub p_max: f64,
    /// 1 + number of vocabulary items with strictly greater probability.
    pub rank: u32,
    pub entropy_nats: f64,
    pub fp: f64,
}

impl TokenScore {
    /// Builds a record, deriving `fp` from the two probabilities.
    pub fn new(p_actual: f64, p_max: f64, rank: u32, entropy_nats: f64) -> Self {
        Self {
            p_actual,
            p_max,
            rank,
            entropy_nats,
            fp: p_actual / p_max,
        }
    }
}

/// Identity of the discriminator backend that produced a set of scores.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScorerInfo {
    pub backend_name: String,
    pub vocab_size: usize,
    pub model_fingerprint: String,
}

impl fmt::Display for ScorerInfo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} (|V|={}, fingerprint {})",
            self.backend_name, self.vocab_size, self.model_fingerprint
        )
    }
}

/// A scored text sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub sample_id: String,
    pub k: usize,
    /// Token surfaces at the backend's granularity, aligned with `token_scores`.
    pub tokens: Vec<String>,
    pub token_scores: Vec<TokenScore>,
    pub fp_s: f64,
    pub backend: ScorerInfo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassLabel {
    #[serde(rename = "h")]
    Human,
    #[serde(rename = "m")]
    Machine,
    /// Only produced by the dual-threshold scheme.
    #[serde(rename = "u")]
    Undefined,
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassLabel::Human => "h",
            ClassLabel::Machine => "m",
            ClassLabel::Undefined => "u",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Thresholds {
    Single { fp_t: f64 },
    Dual { fp_l: f64, fp_r: f64 },
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::OutOfRange(format!("{name}={v} must lie in (0,1)")))
            }
        };
        match *self {
            Thresholds::Single { fp_t } => open_unit("fp_t", fp_t),
            Thresholds::Dual { fp_l, fp_r } => {
                open_unit("fp_l", fp_l)?;
                open_unit("fp_r", fp_r)?;
                if fp_l > fp_r {
                    return Err(Error::OutOfRange(format!("fp_l={fp_l} > fp_r={fp_r}")));
                }
                Ok(())
            }
        }
    }
}

/// Summary of the populations a threshold file was calibrated on.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationMeta {
    pub n_natural: usize,
    pub n_synthetic: usize,
    pub natural_mean: f64,
    pub natural_stdev: f64,
    pub synthetic_mean: f64,
    pub synthetic_stdev: f64,
    /// Misclassified calibration samples under the returned thresholds.
    pub calibration_errors: usize,
    pub calibration_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub spread_factor: Option<f64>,
    #[serde(default)]
    pub degenerate_overlap: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub backend: Option<ScorerInfo>,
}

/// Decision boundaries plus where they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    #[serde(flatten)]
    pub thresholds: Thresholds,
    pub calibration_meta: CalibrationMeta,
}

impl ThresholdConfig {
    pub fn single(fp_t: f64) -> Result<Self> {
        let thresholds = Thresholds::Single { fp_t };
        thresholds.validate()?;
        Ok(Self {
            thresholds,
            calibration_meta: CalibrationMeta::default(),
        })
    }

    pub fn dual(fp_l: f64, fp_r: f64) -> Result<Self> {
        let thresholds = Thresholds::Dual { fp_l, fp_r };
        thresholds.validate()?;
        Ok(Self {
            thresholds,
            calibration_meta: CalibrationMeta::default(),
        })
    }

    pub fn is_dual(&self) -> bool {
        matches!(self.thresholds, Thresholds::Dual { .. })
    }
}

/// Outcome of evaluating one generation system against thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusResult {
    pub n: usize,
    pub n_h: usize,
    pub n_m: usize,
    pub n_u: usize,
    pub h_score: f64,
    pub m_score: f64,
    pub mean_fp: f64,
    pub dual: bool,
}

/// A broken invariant found by [`validate_sample_score`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptySample,
    CountMismatch {
        k: usize,
        len: usize,
    },
    TokenSurfaceMismatch {
        tokens: usize,
        scores: usize,
    },
    ProbabilityOutOfRange {
        position: usize,
        which: &'static str,
        value: f64,
    },
    ActualAboveMax {
        position: usize,
        p_actual: f64,
        p_max: f64,
    },
    FpOutOfRange {
        position: usize,
        fp: f64,
    },
    FpNotRatio {
        position: usize,
        fp: f64,
        ratio: f64,
    },
    ZeroRank {
        position: usize,
    },
    RankArgmaxMismatch {
        position: usize,
        rank: u32,
    },
    EntropyOutOfRange {
        position: usize,
        entropy: f64,
        bound: f64,
    },
    SampleFpOutOfRange {
        fp_s: f64,
    },
    SampleFpNotMean {
        fp_s: f64,
        mean: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptySample => write!(f, "sample has no tokens"),
            Violation::CountMismatch { k, len } => {
                write!(f, "k={k} but {len} token scores")
            }
            Violation::TokenSurfaceMismatch { tokens, scores } => {
                write!(f, "{tokens} surfaces but {scores} token scores")
            }
            Violation::ProbabilityOutOfRange { position, which, value } => {
                write!(f, "{which} out of (0,1] at {position}: {value}")
            }
            Violation::ActualAboveMax { position, .. } => {
                write!(f, "p_actual > p_max at {position}")
            }
            Violation::FpOutOfRange { position, fp } => {
                write!(f, "fp out of (0,1] at {position}: {fp}")
            }
            Violation::FpNotRatio { position, fp, ratio } => {
                write!(f, "fp {fp} != p_actual/p_max {ratio} at {position}")
            }
            Violation::ZeroRank { position } => write!(f, "rank 0 at {position}"),
            Violation::RankArgmaxMismatch { position, rank } => {
                write!(f, "rank {rank} inconsistent with p_actual/p_max at {position}")
            }
            Violation::EntropyOutOfRange {
                position,
                entropy,
                bound,
            } => write!(f, "entropy {entropy} outside [0, {bound}] at {position}"),
            Violation::SampleFpOutOfRange { fp_s } => write!(f, "fp_s out of (0,1]: {fp_s}"),
            Violation::SampleFpNotMean { fp_s, mean } => {
                write!(f, "fp_s {fp_s} is not the token mean {mean}")
            }
        }
    }
}

/// Checks every invariant of a sample and its token scores.
///
/// Violations are returned as data; an empty vector means the sample is valid.
pub fn validate_sample_score(score: &SampleScore) -> Vec<Violation> {
    let mut out = Vec::new();
    if score.token_scores.is_empty() {
        out.push(Violation::EmptySample);
    }
    if score.k != score.token_scores.len() {
        out.push(Violation::CountMismatch {
            k: score.k,
            len: score.token_scores.len(),
        });
    }
    if !score.tokens.is_empty() && score.tokens.len() != score.token_scores.len() {
        out.push(Violation::TokenSurfaceMismatch {
            tokens: score.tokens.len(),
            scores: score.token_scores.len(),
        });
    }
    let entropy_bound = (score.backend.vocab_size.max(1) as f64).ln();
    for (position, ts) in score.token_scores.iter().enumerate() {
        validate_token_score(position, ts, entropy_bound, &mut out);
    }
    if !(score.fp_s > 0.0 && score.fp_s <= 1.0) {
        out.push(Violation::SampleFpOutOfRange { fp_s: score.fp_s });
    }
    if !score.token_scores.is_empty() {
        let mean = score.token_scores.iter().map(|t| t.fp).sum::<f64>() / score.token_scores.len() as f64;
        if (mean - score.fp_s).abs() > VALIDATION_EPS {
            out.push(Violation::SampleFpNotMean { fp_s: score.fp_s, mean });
        }
    }
    out
}

fn validate_token_score(position: usize, ts: &TokenScore, entropy_bound: f64, out: &mut Vec<Violation>) {
    for (which, value) in [("p_actual", ts.p_actual), ("p_max", ts.p_max)] {
        if !(value > 0.0 && value <= 1.0) {
            out.push(Violation::ProbabilityOutOfRange { position, which, value });
        }
    }
    if ts.p_actual > ts.p_max {
        out.push(Violation::ActualAboveMax {
            position,
            p_actual: ts.p_actual,
            p_max: ts.p_max,
        });
    }
    if !(ts.fp > 0.0 && ts.fp <= 1.0) {
        out.push(Violation::FpOutOfRange { position, fp: ts.fp });
    }
    let ratio = ts.p_actual / ts.p_max;
    if (ratio - ts.fp).abs() > VALIDATION_EPS {
        out.push(Violation::FpNotRatio {
            position,
            fp: ts.fp,
            ratio,
        });
    }
    if ts.rank == 0 {
        out.push(Violation::ZeroRank { position });
    } else if (ts.rank == 1) != (ts.p_actual == ts.p_max) {
        out.push(Violation::RankArgmaxMismatch {
            position,
            rank: ts.rank,
        });
    }
    if !(ts.entropy_nats >= 0.0 && ts.entropy_nats <= entropy_bound + VALIDATION_EPS) {
        out.push(Violation::EntropyOutOfRange {
            position,
            entropy: ts.entropy_nats,
            bound: entropy_bound,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn info() -> ScorerInfo {
        ScorerInfo {
            backend_name: "test".into(),
            vocab_size: 4,
            model_fingerprint: "0".into(),
        }
    }

    fn sample(scores: Vec<TokenScore>, fp_s: f64) -> SampleScore {
        SampleScore {
            sample_id: "s".into(),
            k: scores.len(),
            tokens: vec![],
            token_scores: scores,
            fp_s,
            backend: info(),
        }
    }

    #[test]
    fn mean_matches_ok() {
        let s = sample(
            vec![TokenScore::new(0.2, 0.4, 2, 1.0), TokenScore::new(0.4, 0.4, 1, 1.0)],
            0.75,
        );
        assert!(validate_sample_score(&s).is_empty());
    }

    #[test]
    fn fp_above_one_is_reported() {
        let mut t = TokenScore::new(0.4, 0.4, 1, 1.0);
        t.fp = 1.2;
        let v = validate_sample_score(&sample(vec![t], 1.0));
        assert!(v.iter().any(|v| v.to_string().starts_with("fp out of (0,1]")));
    }

    #[test]
    fn actual_above_max_is_reported() {
        let t = TokenScore {
            p_actual: 0.4,
            p_max: 0.3,
            rank: 1,
            entropy_nats: 1.0,
            fp: 1.0,
        };
        let v = validate_sample_score(&sample(vec![t], 1.0));
        assert!(v.iter().any(|v| v.to_string().starts_with("p_actual > p_max")));
    }

    #[test]
    fn rank_must_track_argmax() {
        let v = validate_sample_score(&sample(vec![TokenScore::new(0.3, 0.3, 2, 1.0)], 1.0));
        assert!(matches!(v[0], Violation::RankArgmaxMismatch { .. }));
        let v = validate_sample_score(&sample(vec![TokenScore::new(0.1, 0.3, 1, 1.0)], 1.0 / 3.0));
        assert!(matches!(v[0], Violation::RankArgmaxMismatch { .. }));
    }

    #[test]
    fn entropy_bound_uses_vocab_size() {
        let t = TokenScore::new(0.25, 0.25, 1, 2.0);
        let v = validate_sample_score(&sample(vec![t], 1.0));
        assert!(matches!(v[0], Violation::EntropyOutOfRange { .. }));
    }

    #[test]
    fn thresholds_serialize_with_mode_tag() {
        let cfg = ThresholdConfig::dual(0.3, 0.6).unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.starts_with(r#"{"mode":"dual","fp_l":0.3,"fp_r":0.6"#));
        let back: ThresholdConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        assert!(ThresholdConfig::dual(0.6, 0.3).is_err());
        assert!(ThresholdConfig::single(1.0).is_err());
    }
}
