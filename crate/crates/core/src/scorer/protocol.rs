//! Wire format of the scoring service.
//!
//! `POST /v1/score` takes a [`ScoreRequest`] and answers with a
//! [`ScoreResponse`]; `GET /v1/info` answers with a [`BackendInfo`]. Bodies are
//! UTF-8 JSON. Probabilities travel as natural-log values so that very small
//! probabilities survive the trip.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ScorerInfo, TokenScore};

pub const SCORE_PATH: &str = "/v1/score";
pub const INFO_PATH: &str = "/v1/info";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Pretokenized,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Text {
    Tokens(Vec<String>),
    Raw(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    PActual,
    PMax,
    Rank,
    Entropy,
}

impl Field {
    pub const ALL: [Field; 4] = [Field::PActual, Field::PMax, Field::Rank, Field::Entropy];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub mode: Mode,
    pub texts: Vec<Text>,
    pub include: Vec<Field>,
}

impl ScoreRequest {
    pub fn pretokenized(texts: Vec<Vec<String>>) -> Self {
        Self {
            mode: Mode::Pretokenized,
            texts: texts.into_iter().map(Text::Tokens).collect(),
            include: Field::ALL.to_vec(),
        }
    }

    pub fn raw(texts: Vec<String>) -> Self {
        Self {
            mode: Mode::Raw,
            texts: texts.into_iter().map(Text::Raw).collect(),
            include: Field::ALL.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.texts.is_empty() {
            return Err(Error::EmptyRequest);
        }
        for (i, t) in self.texts.iter().enumerate() {
            match (self.mode, t) {
                (Mode::Pretokenized, Text::Tokens(toks)) if toks.is_empty() => {
                    return Err(Error::OutOfRange(format!("text {i} has no tokens")));
                }
                (Mode::Pretokenized, Text::Tokens(_)) | (Mode::Raw, Text::Raw(_)) => {}
                _ => {
                    return Err(Error::OutOfRange(format!(
                        "text {i} does not match mode {:?}",
                        self.mode
                    )))
                }
            }
        }
        Ok(())
    }

    /// Splits into consecutive requests of at most `size` texts.
    pub fn batches(&self, size: usize) -> Vec<ScoreRequest> {
        self.texts
            .chunks(size.max(1))
            .map(|chunk| ScoreRequest {
                mode: self.mode,
                texts: chunk.to_vec(),
                include: self.include.clone(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendInfo {
    pub name: String,
    pub vocab_size: usize,
    pub fingerprint: String,
}

impl From<&ScorerInfo> for BackendInfo {
    fn from(i: &ScorerInfo) -> Self {
        Self {
            name: i.backend_name.clone(),
            vocab_size: i.vocab_size,
            fingerprint: i.model_fingerprint.clone(),
        }
    }
}

impl From<BackendInfo> for ScorerInfo {
    fn from(b: BackendInfo) -> Self {
        Self {
            backend_name: b.name,
            vocab_size: b.vocab_size,
            model_fingerprint: b.fingerprint,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub token: String,
    pub logp_actual: f64,
    pub logp_max: f64,
    pub rank: u32,
    pub entropy_nats: f64,
}

impl TokenRecord {
    pub fn from_score(token: String, s: &TokenScore) -> Self {
        Self {
            token,
            logp_actual: s.p_actual.ln(),
            logp_max: s.p_max.ln(),
            rank: s.rank,
            entropy_nats: s.entropy_nats,
        }
    }

    pub fn to_score(&self) -> TokenScore {
        TokenScore::new(
            self.logp_actual.exp(),
            self.logp_max.exp(),
            self.rank,
            self.entropy_nats,
        )
    }

    fn check(&self) -> std::result::Result<(), String> {
        let finite = [self.logp_actual, self.logp_max, self.entropy_nats]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(format!("non-finite field for token {:?}", self.token));
        }
        if self.logp_max > 0.0 || self.logp_actual > self.logp_max {
            return Err(format!(
                "logp_actual > logp_max or positive log-prob for {:?}",
                self.token
            ));
        }
        if self.rank == 0 {
            return Err(format!("rank 0 for {:?}", self.token));
        }
        if self.entropy_nats < 0.0 {
            return Err(format!("negative entropy for {:?}", self.token));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub backend: BackendInfo,
    pub results: Vec<Vec<TokenRecord>>,
}

impl ScoreResponse {
    /// Schema checks a client applies before trusting a response.
    pub fn validate_against(&self, request: &ScoreRequest) -> Result<()> {
        if self.results.len() != request.texts.len() {
            return Err(Error::MalformedResponse(format!(
                "{} results for {} texts",
                self.results.len(),
                request.texts.len()
            )));
        }
        for (i, (records, text)) in self.results.iter().zip(&request.texts).enumerate() {
            if let Text::Tokens(toks) = text {
                if toks.len() != records.len() {
                    return Err(Error::MalformedResponse(format!(
                        "text {i}: {} records for {} tokens",
                        records.len(),
                        toks.len()
                    )));
                }
            }
            for r in records {
                r.check().map_err(Error::MalformedResponse)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn request_shape() {
        let req = ScoreRequest::pretokenized(vec![vec!["a".into(), "b".into()]]);
        assert_eq!(
            serde_json::to_string(&req).unwrap(),
            r#"{"mode":"pretokenized","texts":[["a","b"]],"include":["p_actual","p_max","rank","entropy"]}"#
        );
        let raw = ScoreRequest::raw(vec!["Hi there".into()]);
        assert_eq!(
            serde_json::to_string(&raw).unwrap(),
            r#"{"mode":"raw","texts":["Hi there"],"include":["p_actual","p_max","rank","entropy"]}"#
        );
    }

    #[test]
    fn request_validation() {
        assert!(matches!(
            ScoreRequest::pretokenized(vec![]).validate(),
            Err(Error::EmptyRequest)
        ));
        assert!(ScoreRequest::pretokenized(vec![vec![]]).validate().is_err());
        let mut mixed = ScoreRequest::raw(vec!["x".into()]);
        mixed.mode = Mode::Pretokenized;
        assert!(mixed.validate().is_err());
    }

    #[test]
    fn batches_preserve_order() {
        let texts: Vec<Vec<String>> = (0..70).map(|i| vec![i.to_string()]).collect();
        let req = ScoreRequest::pretokenized(texts.clone());
        let batches = req.batches(32);
        assert_eq!(batches.iter().map(|b| b.texts.len()).collect::<Vec<_>>(), [32, 32, 6]);
        let flat: Vec<Text> = batches.into_iter().flat_map(|b| b.texts).collect();
        assert_eq!(flat, req.texts);
    }

    #[test]
    fn response_schema_checks() {
        let req = ScoreRequest::pretokenized(vec![vec!["a".into()]]);
        let mut resp = ScoreResponse {
            backend: BackendInfo {
                name: "x".into(),
                vocab_size: 3,
                fingerprint: "f".into(),
            },
            results: vec![vec![TokenRecord {
                token: "a".into(),
                logp_actual: -1.0,
                logp_max: -0.5,
                rank: 2,
                entropy_nats: 0.9,
            }]],
        };
        resp.validate_against(&req).unwrap();
        resp.results[0][0].logp_actual = 0.0;
        assert!(matches!(resp.validate_against(&req), Err(Error::MalformedResponse(_))));
        resp.results[0].clear();
        assert!(resp.validate_against(&req).is_err());
    }

    fn record() -> impl Strategy<Value = TokenRecord> {
        ("[a-z]{1,5}", -30.0f64..0.0, 0.0f64..1.0, 1u32..1000, 0.0f64..10.0).prop_map(
            |(token, lp_max, frac, rank, entropy_nats)| TokenRecord {
                token,
                logp_actual: lp_max - frac * 5.0,
                logp_max: lp_max,
                rank,
                entropy_nats,
            },
        )
    }

    proptest! {
        #[test]
        fn canonical_response_roundtrip(results in proptest::collection::vec(proptest::collection::vec(record(), 1..5), 1..4)) {
            let resp = ScoreResponse {
                backend: BackendInfo { name: "ngram-3".into(), vocab_size: 10, fingerprint: "abc".into() },
                results,
            };
            let text = serde_json::to_string(&resp).unwrap();
            let parsed: ScoreResponse = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(serde_json::to_string(&parsed).unwrap(), text);
        }

        #[test]
        fn canonical_request_roundtrip(texts in proptest::collection::vec(proptest::collection::vec("[a-z',.]{1,6}", 1..6), 1..5)) {
            let text = serde_json::to_string(&ScoreRequest::pretokenized(texts)).unwrap();
            let parsed: ScoreRequest = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(serde_json::to_string(&parsed).unwrap(), text);
        }
    }
}
