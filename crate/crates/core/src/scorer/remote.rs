//! HTTP client for the scoring protocol.

// ureq's error type is large and not ours to shrink.
#![allow(clippy::result_large_err)]

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use log::{debug, warn};

use super::protocol::{BackendInfo, ErrorBody, ScoreRequest, ScoreResponse, INFO_PATH, SCORE_PATH};
use super::Scorer;
use crate::error::{Error, Result};
use crate::types::{ScorerInfo, TokenScore};

pub const TIMEOUT_ENV: &str = "FPSCORE_REMOTE_TIMEOUT_SECS";

/// Server-side tokens of one raw text with their scores.
pub type RawScored = (Vec<String>, Vec<TokenScore>);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RemoteConfig {
    pub timeout: Duration,
    pub batch_size: usize,
    pub max_in_flight: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(30),
            batch_size: 32,
            max_in_flight: 8,
        }
    }
}

impl RemoteConfig {
    /// Defaults, with the timeout overridable through `FPSCORE_REMOTE_TIMEOUT_SECS`.
    pub fn from_env() -> Self {
        let mut cfg = Self::default();
        if let Some(secs) = std::env::var(TIMEOUT_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<u64>().ok())
        {
            cfg.timeout = Duration::from_secs(secs);
        }
        cfg
    }
}

pub struct RemoteScorer {
    base: String,
    agent: ureq::Agent,
    config: RemoteConfig,
}

impl RemoteScorer {
    pub fn new(base_url: &str) -> Self {
        Self::with_config(base_url, RemoteConfig::from_env())
    }

    pub fn with_config(base_url: &str, config: RemoteConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
        Self {
            base: base_url.trim_end_matches('/').to_owned(),
            agent,
            config,
        }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    pub fn fetch_info(&self) -> Result<ScorerInfo> {
        let url = format!("{}{INFO_PATH}", self.base);
        let resp = self.with_retry(|| self.agent.get(&url).call())?;
        let info: BackendInfo = read_json(resp)?;
        Ok(info.into())
    }

    /// Sends `request` in batches and reassembles the results in request order.
    ///
    /// At most `max_in_flight` batches are outstanding at once.
    pub fn remote_score(&self, request: &ScoreRequest) -> Result<ScoreResponse> {
        request.validate()?;
        let batches = request.batches(self.config.batch_size);
        let slots: Mutex<Vec<Option<Result<ScoreResponse>>>> = Mutex::new((0..batches.len()).map(|_| None).collect());
        let next = AtomicUsize::new(0);
        let workers = self.config.max_in_flight.clamp(1, batches.len());
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(batch) = batches.get(i) else { break };
                    let out = self.post_batch(batch);
                    slots.lock().unwrap()[i] = Some(out);
                });
            }
        });
        let mut backend: Option<BackendInfo> = None;
        let mut results = Vec::with_capacity(request.texts.len());
        for slot in slots.into_inner().unwrap() {
            let resp = slot.expect("every batch is visited")?;
            match &backend {
                None => backend = Some(resp.backend.clone()),
                Some(b) if *b != resp.backend => {
                    return Err(Error::MalformedResponse("backend changed between batches".into()))
                }
                Some(_) => {}
            }
            results.extend(resp.results);
        }
        Ok(ScoreResponse {
            backend: backend.expect("at least one batch"),
            results,
        })
    }

    /// Raw-mode scoring: the server tokenizes and reports its own surfaces.
    pub fn score_raw(&self, texts: &[String]) -> Result<(ScorerInfo, Vec<RawScored>)> {
        let resp = self.remote_score(&ScoreRequest::raw(texts.to_vec()))?;
        let out = resp
            .results
            .iter()
            .map(|recs| {
                (
                    recs.iter().map(|r| r.token.clone()).collect(),
                    recs.iter().map(|r| r.to_score()).collect(),
                )
            })
            .collect();
        Ok((resp.backend.into(), out))
    }

    fn post_batch(&self, batch: &ScoreRequest) -> Result<ScoreResponse> {
        let url = format!("{}{SCORE_PATH}", self.base);
        let body = serde_json::to_string(batch)?;
        let resp = self.with_retry(|| {
            self.agent
                .post(&url)
                .set("Content-Type", "application/json")
                .send_string(&body)
        })?;
        let parsed: ScoreResponse = read_json(resp)?;
        parsed.validate_against(batch)?;
        debug!("scored batch of {} texts", batch.texts.len());
        Ok(parsed)
    }

    /// One reconnect attempt on transport failure; status errors are final.
    fn with_retry(
        &self,
        call: impl Fn() -> std::result::Result<ureq::Response, ureq::Error>,
    ) -> Result<ureq::Response> {
        let mut attempt = 0;
        loop {
            match call() {
                Ok(r) => return Ok(r),
                Err(ureq::Error::Status(status, resp)) => {
                    let message = resp
                        .into_string()
                        .ok()
                        .and_then(|b| serde_json::from_str::<ErrorBody>(&b).ok().map(|e| e.error))
                        .unwrap_or_default();
                    return Err(Error::RemoteStatus { status, message });
                }
                Err(ureq::Error::Transport(t)) if attempt == 0 => {
                    warn!("transport failure ({t}), reconnecting once");
                    attempt += 1;
                }
                Err(ureq::Error::Transport(t)) => {
                    return Err(Error::RemoteUnreachable(t.to_string()));
                }
            }
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(resp: ureq::Response) -> Result<T> {
    let body = resp
        .into_string()
        .map_err(|e| Error::RemoteUnreachable(format!("reading body: {e}")))?;
    serde_json::from_str(&body).map_err(|e| Error::MalformedResponse(e.to_string()))
}

impl Scorer for RemoteScorer {
    fn info(&self) -> Result<ScorerInfo> {
        self.fetch_info()
    }

    fn score(&self, tokens: &[String]) -> Result<Vec<TokenScore>> {
        Ok(self.score_batch(&[tokens.to_vec()])?.pop().unwrap_or_default())
    }

    fn score_batch(&self, texts: &[Vec<String>]) -> Result<Vec<Vec<TokenScore>>> {
        let resp = self.remote_score(&ScoreRequest::pretokenized(texts.to_vec()))?;
        Ok(resp
            .results
            .iter()
            .map(|recs| recs.iter().map(|r| r.to_score()).collect())
            .collect())
    }
}
