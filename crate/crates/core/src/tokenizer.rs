//! Word-level tokenization and vocabulary construction.
//!
//! Text is lowercased, split on Unicode whitespace, and any run of leading or
//! trailing punctuation is peeled off one character per token. Interior
//! punctuation (`dog's`, `objective-a`) stays inside the word.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Token, TokenId};

pub const UNK: &str = "<unk>";
pub const EOS: &str = "</s>";
pub const UNK_ID: TokenId = 0;
pub const EOS_ID: TokenId = 1;

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}' | '\u{2019}' | '\u{201c}' | '\u{201d}' | '\u{2013}' | '\u{2014}' | '\u{2026}'
        )
}

/// A pre-split clitic such as `'s` or `'ll` stays one token.
fn is_clitic(chars: &[char]) -> bool {
    chars.len() >= 2
        && chars.len() <= 3
        && matches!(chars[0], '\'' | '\u{2019}')
        && chars[1..].iter().all(|c| c.is_alphabetic())
}

pub fn tokenize(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let mut out = Vec::new();
    for chunk in lowered.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        if is_clitic(&chars) {
            out.push(chunk.to_owned());
            continue;
        }
        let start = chars.iter().position(|c| !is_punct(*c));
        let Some(start) = start else {
            out.extend(chars.iter().map(|c| c.to_string()));
            continue;
        };
        let end = chars.iter().rposition(|c| !is_punct(*c)).unwrap() + 1;
        out.extend(chars[..start].iter().map(|c| c.to_string()));
        out.push(chars[start..end].iter().collect());
        out.extend(chars[end..].iter().map(|c| c.to_string()));
    }
    out
}

/// Collapses runs of identical consecutive tokens into one.
///
/// Optional pre-scoring filter; off unless requested.
pub fn collapse_repeats(tokens: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(tokens.len());
    for t in tokens {
        if out.last() != Some(t) {
            out.push(t.clone());
        }
    }
    out
}

/// Reads a corpus file: UTF-8, one sample per line, blank lines skipped.
pub fn read_corpus(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::to_owned)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    surfaces: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, TokenId>,
    min_count: usize,
}

impl Vocabulary {
    /// Builds a vocabulary of every surface seen at least `min_count` times.
    ///
    /// Ids 0 and 1 are reserved for UNK and EOS; the rest are ordered by
    /// descending frequency, then lexicographically.
    pub fn build<S: AsRef<str>>(corpus: &[Vec<S>], min_count: usize) -> Result<Self> {
        if min_count == 0 {
            return Err(Error::InvalidHyperparameter("min_count must be >= 1".into()));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for tok in corpus.iter().flatten() {
            *counts.entry(tok.as_ref()).or_default() += 1;
        }
        if counts.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(s, c)| *c >= min_count && *s != UNK && *s != EOS)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let surfaces = [UNK, EOS]
            .into_iter()
            .chain(kept.into_iter().map(|(s, _)| s))
            .map(str::to_owned)
            .collect();
        Ok(Self::from_surfaces(surfaces, min_count))
    }

    /// Reassembles a vocabulary from an ordered surface list (ids = positions).
    pub fn from_surfaces(surfaces: Vec<String>, min_count: usize) -> Self {
        let index = surfaces
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as TokenId))
            .collect();
        Self {
            surfaces,
            index,
            min_count,
        }
    }

    pub fn len(&self) -> usize {
        self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn surfaces(&self) -> &[String] {
        &self.surfaces
    }

    pub fn id(&self, surface: &str) -> TokenId {
        self.index.get(surface).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, surface: &str) -> bool {
        self.index.contains_key(surface)
    }

    pub fn surface(&self, id: TokenId) -> Option<&str> {
        self.surfaces.get(id as usize).map(String::as_str)
    }

    pub fn token(&self, surface: &str) -> Token {
        let id = self.id(surface);
        Token {
            surface: self.surfaces[id as usize].clone(),
            id,
        }
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<TokenId> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> Vec<String> {
        ids.iter().map(|&i| self.surface(i).unwrap_or(UNK).to_owned()).collect()
    }

    /// Fraction of tokens in `corpus` that fall back to UNK.
    pub fn unk_rate<S: AsRef<str>>(&self, corpus: &[Vec<S>]) -> f64 {
        let (mut unk, mut total) = (0usize, 0usize);
        for t in corpus.iter().flatten() {
            total += 1;
            if !self.contains(t.as_ref()) || t.as_ref() == UNK {
                unk += 1;
            }
        }
        if total == 0 {
            0.0
        } else {
            unk as f64 / total as f64
        }
    }
}
