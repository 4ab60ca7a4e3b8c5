//! Discriminator backends.
//!
//! A [`Scorer`] turns a token sequence into per-position statistics: the
//! probability of the observed token, the highest probability at that
//! position, the observed token's rank and the entropy of the distribution.
//! [`NgramScorer`] computes these in-process; [`remote::RemoteScorer`] asks a
//! server speaking the JSON protocol in [`protocol`].

pub mod protocol;
pub mod remote;
pub mod server;

use std::sync::Arc;

use crate::error::Result;
use crate::ngram::NgramModel;
use crate::types::{ScorerInfo, TokenId, TokenScore};

pub use remote::{RemoteConfig, RemoteScorer};
pub use server::ScoreServer;

pub trait Scorer: Send + Sync {
    fn info(&self) -> Result<ScorerInfo>;

    /// Scores every position of a pre-tokenized text.
    fn score(&self, tokens: &[String]) -> Result<Vec<TokenScore>>;

    fn score_batch(&self, texts: &[Vec<String>]) -> Result<Vec<Vec<TokenScore>>> {
        texts.iter().map(|t| self.score(t)).collect()
    }
}

/// Scores the token at `actual` against a full next-token distribution.
pub fn score_position(dist: &[f64], actual: usize) -> TokenScore {
    let p_actual = dist[actual];
    let mut p_max = 0.0f64;
    let mut above = 0u32;
    let mut entropy = 0.0;
    for &p in dist {
        p_max = p_max.max(p);
        if p > p_actual {
            above += 1;
        }
        if p > 0.0 {
            entropy -= p * p.ln();
        }
    }
    // Rounding can push a near-uniform distribution a hair past ln|V|.
    let entropy = entropy.clamp(0.0, (dist.len() as f64).ln());
    TokenScore::new(p_actual, p_max, above + 1, entropy)
}

/// In-process scorer backed by an n-gram model.
#[derive(Debug, Clone)]
pub struct NgramScorer {
    model: Arc<NgramModel>,
}

impl NgramScorer {
    pub fn new(model: NgramModel) -> Self {
        Self { model: Arc::new(model) }
    }

    pub fn from_shared(model: Arc<NgramModel>) -> Self {
        Self { model }
    }

    pub fn model(&self) -> &NgramModel {
        &self.model
    }

    pub fn shared_model(&self) -> Arc<NgramModel> {
        Arc::clone(&self.model)
    }

    pub fn score_ids(&self, ids: &[TokenId]) -> Vec<TokenScore> {
        (0..ids.len())
            .map(|i| {
                let dist = self.model.next_distribution(&ids[..i]);
                score_position(&dist, ids[i] as usize)
            })
            .collect()
    }
}

impl Scorer for NgramScorer {
    fn info(&self) -> Result<ScorerInfo> {
        Ok(self.model.info())
    }

    fn score(&self, tokens: &[String]) -> Result<Vec<TokenScore>> {
        Ok(self.score_ids(&self.model.vocab().encode(tokens)))
    }

    /// Runs on the current rayon pool; output order follows input order.
    fn score_batch(&self, texts: &[Vec<String>]) -> Result<Vec<Vec<TokenScore>>> {
        use rayon::prelude::*;
        texts.par_iter().map(|t| self.score(t)).collect()
    }
}
