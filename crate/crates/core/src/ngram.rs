//! Interpolated n-gram language model with a Laplace-smoothed unigram base.
//!
//! For a context `h` the model recursively mixes maximum-likelihood estimates
//! of increasing order:
//!
//! ```text
//! p_1(w)     = (c(w) + alpha) / (T + alpha * |V|)
//! p_o(w | h) = lambda * c(h, w) / c(h) + (1 - lambda) * p_{o-1}(w | h')   if c(h) > 0
//!            = p_{o-1}(w | h')                                           otherwise
//! ```
//!
//! where `h'` drops the oldest token of `h`. Every sample is left-padded with
//! `order - 1` BOS markers and terminated by EOS. BOS only ever appears in
//! contexts, so the prediction vocabulary is exactly the [`Vocabulary`].

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::{Compression, GzBuilder};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tokenizer::{Vocabulary, EOS_ID, UNK_ID};
use crate::types::{ScorerInfo, TokenId};

/// Context-only padding symbol; never predicted.
pub const BOS_ID: TokenId = TokenId::MAX;
pub const MAX_ORDER: usize = 5;

const MAGIC: &str = "FPLM";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NgramConfig {
    pub order: usize,
    pub lambda: f64,
    pub alpha: f64,
}

impl Default for NgramConfig {
    fn default() -> Self {
        Self {
            order: 3,
            lambda: 0.75,
            alpha: 1.0,
        }
    }
}

impl NgramConfig {
    pub fn with_order(order: usize) -> Self {
        Self {
            order,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_ORDER).contains(&self.order) {
            return Err(Error::InvalidHyperparameter(format!(
                "order {} outside [1, {MAX_ORDER}]",
                self.order
            )));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::InvalidHyperparameter(format!(
                "lambda {} outside (0, 1)",
                self.lambda
            )));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidHyperparameter(format!(
                "alpha {} must be > 0",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Successor counts of one context, sorted by token id.
#[derive(Debug, Clone, PartialEq, Eq)]
struct ContextCounts {
    total: u64,
    next: Vec<(TokenId, u64)>,
}

#[derive(Debug, Clone)]
pub struct NgramModel {
    config: NgramConfig,
    vocab: Vocabulary,
    /// `tables[o - 1]` holds contexts of length `o - 1`.
    tables: Vec<HashMap<Vec<TokenId>, ContextCounts>>,
    unigram: Vec<f64>,
    fingerprint: String,
}

impl NgramModel {
    pub fn train(corpus: &[Vec<TokenId>], vocab: Vocabulary, config: NgramConfig) -> Result<Self> {
        config.validate()?;
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if vocab.len() < 2 {
            return Err(Error::DegenerateVocabulary("vocabulary lacks reserved ids".into()));
        }
        let n = config.order;
        let size = vocab.len();
        let mut raw: Vec<HashMap<Vec<TokenId>, HashMap<TokenId, u64>>> = vec![HashMap::new(); n];
        let mut padded = Vec::new();
        for sample in corpus {
            if let Some(&id) = sample.iter().find(|&&id| id as usize >= size) {
                return Err(Error::TokenOutOfVocabulary { id, size });
            }
            padded.clear();
            padded.resize(n - 1, BOS_ID);
            padded.extend_from_slice(sample);
            padded.push(EOS_ID);
            for i in (n - 1)..padded.len() {
                let w = padded[i];
                for (o, table) in raw.iter_mut().enumerate() {
                    let ctx = &padded[i - o..i];
                    let succ = match table.get_mut(ctx) {
                        Some(s) => s,
                        None => table.entry(ctx.to_vec()).or_default(),
                    };
                    *succ.entry(w).or_default() += 1;
                }
            }
        }
        let tables = raw
            .into_iter()
            .map(|table| {
                table
                    .into_iter()
                    .map(|(ctx, succ)| {
                        let mut next: Vec<(TokenId, u64)> = succ.into_iter().collect();
                        next.sort_unstable();
                        let total = next.iter().map(|(_, c)| c).sum();
                        (ctx, ContextCounts { total, next })
                    })
                    .collect()
            })
            .collect();
        Self::assemble(config, vocab, tables)
    }

    fn assemble(
        config: NgramConfig,
        vocab: Vocabulary,
        tables: Vec<HashMap<Vec<TokenId>, ContextCounts>>,
    ) -> Result<Self> {
        let size = vocab.len();
        let mut counts = vec![0u64; size];
        let mut total = 0u64;
        if let Some(root) = tables[0].get(&[][..]) {
            for &(w, c) in &root.next {
                counts[w as usize] = c;
            }
            total = root.total;
        }
        let denom = total as f64 + config.alpha * size as f64;
        let unigram = counts.iter().map(|&c| (c as f64 + config.alpha) / denom).collect();
        let mut model = Self {
            config,
            vocab,
            tables,
            unigram,
            fingerprint: String::new(),
        };
        model.fingerprint = hex_prefix(&model.canonical_checksum()?);
        Ok(model)
    }

    pub fn config(&self) -> &NgramConfig {
        &self.config
    }

    pub fn order(&self) -> usize {
        self.config.order
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn info(&self) -> ScorerInfo {
        ScorerInfo {
            backend_name: format!("ngram-{}", self.config.order),
            vocab_size: self.vocab.len(),
            model_fingerprint: self.fingerprint.clone(),
        }
    }

    /// Raw count of `w` following `context` (context length selects the table).
    pub fn count(&self, context: &[TokenId], w: TokenId) -> u64 {
        self.tables
            .get(context.len())
            .and_then(|t| t.get(context))
            .and_then(|cc| cc.next.binary_search_by_key(&w, |e| e.0).ok().map(|i| cc.next[i].1))
            .unwrap_or(0)
    }

    /// Laplace-smoothed unigram distribution, the recursion base.
    pub fn unigram(&self) -> &[f64] {
        &self.unigram
    }

    /// Full next-token distribution over the vocabulary given the history.
    ///
    /// Only the last `order - 1` ids matter; shorter histories are padded
    /// with BOS. Ids outside the vocabulary are read as UNK.
    pub fn next_distribution(&self, context: &[TokenId]) -> Vec<f64> {
        let history = self.history(context);
        let lambda = self.config.lambda;
        let mut p = self.unigram.clone();
        for o in 2..=self.config.order {
            let ctx = &history[history.len() - (o - 1)..];
            let Some(cc) = self.tables[o - 1].get(ctx) else {
                continue;
            };
            let total = cc.total as f64;
            for v in p.iter_mut() {
                *v *= 1.0 - lambda;
            }
            for &(w, c) in &cc.next {
                p[w as usize] += lambda * (c as f64 / total);
            }
        }
        p
    }

    fn history(&self, context: &[TokenId]) -> Vec<TokenId> {
        let keep = self.config.order - 1;
        let size = self.vocab.len();
        let tail = &context[context.len().saturating_sub(keep)..];
        let mut h = vec![BOS_ID; keep - tail.len()];
        h.extend(tail.iter().map(|&id| {
            if id == BOS_ID || (id as usize) < size {
                id
            } else {
                UNK_ID
            }
        }));
        h
    }

    /// Top-k sampling from `prompt`, fully determined by `seed`.
    ///
    /// Returns the generated continuation without the prompt and without the
    /// terminating EOS.
    pub fn generate_topk(&self, seed: u64, k: usize, max_len: usize, prompt: &[TokenId]) -> Result<Vec<TokenId>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.generate(&mut rng, &TopK { k, max_len, min_len: 0 }, prompt)
    }

    pub fn generate<R: Rng>(&self, rng: &mut R, opts: &TopK, prompt: &[TokenId]) -> Result<Vec<TokenId>> {
        if opts.k == 0 || opts.k > self.vocab.len() {
            return Err(Error::InvalidHyperparameter(format!(
                "k={} must lie in [1, {}]",
                opts.k,
                self.vocab.len()
            )));
        }
        let mut history = prompt.to_vec();
        let mut out = Vec::new();
        while out.len() < opts.max_len {
            let mut dist = self.next_distribution(&history);
            if out.len() < opts.min_len {
                dist[EOS_ID as usize] = 0.0;
            }
            let next = sample_top_k(&dist, opts.k, rng);
            if next == EOS_ID {
                break;
            }
            out.push(next);
            history.push(next);
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = self.to_file(self.canonical_checksum()?);
        let body = serde_json::to_vec(&file)?;
        let out = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut gz: GzEncoder<File> = GzBuilder::new().mtime(0).write(out, Compression::default());
        gz.write_all(&body).map_err(|e| Error::io(path, e))?;
        gz.finish().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut body = Vec::new();
        GzDecoder::new(file)
            .read_to_end(&mut body)
            .map_err(|e| Error::CorruptFile(format!("{}: {e}", path.display())))?;
        let parsed: ModelFile =
            serde_json::from_slice(&body).map_err(|e| Error::CorruptFile(format!("{}: {e}", path.display())))?;
        if parsed.magic != MAGIC {
            return Err(Error::CorruptFile(format!("{}: bad magic", path.display())));
        }
        if parsed.version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                expected: FORMAT_VERSION,
                found: parsed.version,
            });
        }
        let config = NgramConfig {
            order: parsed.order,
            lambda: parsed.lambda,
            alpha: parsed.alpha,
        };
        config
            .validate()
            .map_err(|e| Error::CorruptFile(format!("{}: {e}", path.display())))?;
        if parsed.tables.len() != config.order {
            return Err(Error::CorruptFile("table count does not match order".into()));
        }
        let vocab = Vocabulary::from_surfaces(parsed.vocab, parsed.min_count);
        let mut tables = Vec::with_capacity(config.order);
        for entries in parsed.tables {
            let mut table = HashMap::with_capacity(entries.len());
            for e in entries {
                let total = e.next.iter().map(|(_, c)| c).sum();
                table.insert(e.context, ContextCounts { total, next: e.next });
            }
            tables.push(table);
        }
        let model = Self::assemble(config, vocab, tables)?;
        if model.canonical_checksum()? != parsed.checksum {
            return Err(Error::CorruptFile(format!("{}: checksum mismatch", path.display())));
        }
        Ok(model)
    }

    fn to_file(&self, checksum: String) -> ModelFile {
        let tables = self
            .tables
            .iter()
            .map(|table| {
                let mut entries: Vec<TableEntry> = table
                    .iter()
                    .map(|(ctx, cc)| TableEntry {
                        context: ctx.clone(),
                        next: cc.next.clone(),
                    })
                    .collect();
                entries.sort_by(|a, b| a.context.cmp(&b.context));
                entries
            })
            .collect();
        ModelFile {
            magic: MAGIC.into(),
            version: FORMAT_VERSION,
            order: self.config.order,
            lambda: self.config.lambda,
            alpha: self.config.alpha,
            min_count: self.vocab.min_count(),
            vocab: self.vocab.surfaces().to_vec(),
            checksum,
            tables,
        }
    }

    fn canonical_checksum(&self) -> Result<String> {
        let body = serde_json::to_vec(&self.to_file(String::new()))?;
        Ok(to_hex(&Sha256::digest(&body)))
    }
}

/// Top-k decoding options.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TopK {
    pub k: usize,
    pub max_len: usize,
    /// EOS is suppressed until this many tokens have been produced.
    pub min_len: usize,
}

/// The `k` most probable ids (ties to the lower id) with renormalized mass.
///
/// Zero-probability entries are never kept, so fewer than `k` pairs can come
/// back when the distribution has been masked.
pub fn top_k(dist: &[f64], k: usize) -> Vec<(TokenId, f64)> {
    let mut ids: Vec<usize> = (0..dist.len()).filter(|&i| dist[i] > 0.0).collect();
    let cmp = |a: &usize, b: &usize| dist[*b].total_cmp(&dist[*a]).then(a.cmp(b));
    let k = k.min(ids.len());
    if k == 0 {
        return Vec::new();
    }
    if k < ids.len() {
        ids.select_nth_unstable_by(k - 1, cmp);
        ids.truncate(k);
    }
    ids.sort_unstable_by(cmp);
    let mass: f64 = ids.iter().map(|&i| dist[i]).sum();
    ids.into_iter().map(|i| (i as TokenId, dist[i] / mass)).collect()
}

/// Draws one id from the renormalized top-k head of `dist`.
pub fn sample_top_k<R: Rng>(dist: &[f64], k: usize, rng: &mut R) -> TokenId {
    let head = top_k(dist, k);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for &(id, p) in &head {
        acc += p;
        if u < acc {
            return id;
        }
    }
    head.last().map(|e| e.0).unwrap_or(EOS_ID)
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    magic: String,
    version: u32,
    order: usize,
    lambda: f64,
    alpha: f64,
    min_count: usize,
    vocab: Vec<String>,
    checksum: String,
    tables: Vec<Vec<TableEntry>>,
}

#[derive(Serialize, Deserialize)]
struct TableEntry {
    context: Vec<TokenId>,
    next: Vec<(TokenId, u64)>,
}

fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn hex_prefix(hex: &str) -> String {
    hex[..16].to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::{EOS, UNK};

    fn setup(text: &str, config: NgramConfig) -> (NgramModel, Vec<TokenId>) {
        let toks: Vec<String> = text.split(' ').map(str::to_owned).collect();
        let vocab = Vocabulary::build(std::slice::from_ref(&toks), 1).unwrap();
        let ids = vocab.encode(&toks);
        (
            NgramModel::train(std::slice::from_ref(&ids), vocab, config).unwrap(),
            ids,
        )
    }

    #[test]
    fn laplace_unigram() {
        let (m, _) = setup("a a b", NgramConfig::with_order(1));
        let v = m.vocab();
        assert_eq!(v.surfaces(), [UNK, EOS, "a", "b"]);
        let p = m.next_distribution(&[]);
        assert_eq!(p[v.id("a") as usize], 0.375);
        assert_eq!(p[UNK_ID as usize], 0.125);
        assert_eq!(p[EOS_ID as usize], 0.25);
    }

    #[test]
    fn bigram_interpolation_by_hand() {
        let (m, _) = setup("a b a b a c", NgramConfig::with_order(2));
        let v = m.vocab();
        let p = m.next_distribution(&[v.id("a")]);
        // c(a)=3, c(a,b)=2; T=7 incl. EOS, |V|=5 -> p_1(b) = 3/12
        let expected = 0.75 * (2.0 / 3.0) + 0.25 * (3.0 / 12.0);
        assert!((p[v.id("b") as usize] - expected).abs() < 1e-15);
    }

    #[test]
    fn unseen_context_falls_back_to_unigram() {
        let (m, _) = setup("a b a b a c", NgramConfig::with_order(3));
        // EOS never appears as a context token.
        assert_eq!(m.next_distribution(&[EOS_ID, EOS_ID]), m.unigram());
    }

    #[test]
    fn distributions_are_proper() {
        let (m, ids) = setup("x y z x y y z z z x w", NgramConfig::with_order(4));
        for i in 0..=ids.len() {
            let p = m.next_distribution(&ids[..i]);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(p.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let vocab = Vocabulary::build(&[vec!["a"]], 1).unwrap();
        for cfg in [
            NgramConfig {
                order: 0,
                ..Default::default()
            },
            NgramConfig {
                order: 6,
                ..Default::default()
            },
            NgramConfig {
                lambda: 1.0,
                ..Default::default()
            },
            NgramConfig {
                alpha: 0.0,
                ..Default::default()
            },
        ] {
            assert!(matches!(
                NgramModel::train(&[vec![2]], vocab.clone(), cfg),
                Err(Error::InvalidHyperparameter(_))
            ));
        }
        assert!(matches!(
            NgramModel::train(&[], vocab.clone(), NgramConfig::default()),
            Err(Error::EmptyCorpus)
        ));
        assert!(matches!(
            NgramModel::train(&[vec![9]], vocab, NgramConfig::default()),
            Err(Error::TokenOutOfVocabulary { .. })
        ));
    }

    #[test]
    fn order_independent_training() {
        let vocab = Vocabulary::build(&[vec!["a", "b", "c"]], 1).unwrap();
        let corpus = vec![vec![2, 3], vec![4, 2, 2], vec![3]];
        let mut rev = corpus.clone();
        rev.reverse();
        let a = NgramModel::train(&corpus, vocab.clone(), NgramConfig::default()).unwrap();
        let b = NgramModel::train(&rev, vocab, NgramConfig::default()).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.next_distribution(&[2]), b.next_distribution(&[2]));
    }

    #[test]
    fn fingerprint_tracks_parameters_and_counts() {
        let (a, _) = setup("a b a", NgramConfig::default());
        let (b, _) = setup(
            "a b a",
            NgramConfig {
                lambda: 0.5,
                ..Default::default()
            },
        );
        let (c, _) = setup("a b b", NgramConfig::default());
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert_eq!(a.info().backend_name, "ngram-3");
    }

    #[test]
    fn top_k_ties_prefer_lower_id() {
        let head = top_k(&[0.1, 0.3, 0.3, 0.3], 2);
        assert_eq!(head.iter().map(|e| e.0).collect::<Vec<_>>(), vec![1, 2]);
        assert!((head[0].1 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn greedy_and_seeded_generation() {
        let (m, ids) = setup("a b c a b c a b d", NgramConfig::with_order(2));
        let greedy = m.generate_topk(1, 1, 10, &ids[..1]).unwrap();
        let mut h = ids[..1].to_vec();
        for &t in &greedy {
            let p = m.next_distribution(&h);
            assert_eq!(top_k(&p, 1)[0].0, t);
            h.push(t);
        }
        let a = m.generate_topk(42, 3, 20, &[]).unwrap();
        let b = m.generate_topk(42, 3, 20, &[]).unwrap();
        assert_eq!(a, b);
        assert!(m.generate_topk(0, 0, 5, &[]).is_err());
    }

    #[test]
    fn min_len_suppresses_eos() {
        let (m, _) = setup("a", NgramConfig::with_order(2));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = m
            .generate(
                &mut rng,
                &TopK {
                    k: 1,
                    max_len: 6,
                    min_len: 6,
                },
                &[],
            )
            .unwrap();
        assert_eq!(out.len(), 6);
    }

    #[test]
    fn save_load_roundtrip() {
        let (m, ids) = setup("the cat sat on the mat the end", NgramConfig::default());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.fplm");
        m.save(&path).unwrap();
        let back = NgramModel::load(&path).unwrap();
        assert_eq!(back.fingerprint(), m.fingerprint());
        for i in 0..=ids.len() {
            let (x, y) = (m.next_distribution(&ids[..i]), back.next_distribution(&ids[..i]));
            assert!(x.iter().zip(&y).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
        let bytes = std::fs::read(&path).unwrap();
        m.save(&path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), bytes);
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let (m, _) = setup("a b c", NgramConfig::default());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.fplm");
        m.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(NgramModel::load(&path), Err(Error::CorruptFile(_))));
    }

    fn rewrite(path: &Path, edit: impl Fn(&mut serde_json::Value)) {
        let mut body = Vec::new();
        GzDecoder::new(File::open(path).unwrap())
            .read_to_end(&mut body)
            .unwrap();
        let mut v: serde_json::Value = serde_json::from_slice(&body).unwrap();
        edit(&mut v);
        let mut gz = GzEncoder::new(File::create(path).unwrap(), Compression::default());
        gz.write_all(&serde_json::to_vec(&v).unwrap()).unwrap();
        gz.finish().unwrap();
    }

    #[test]
    fn tampering_and_version_are_detected() {
        let (m, _) = setup("a b c", NgramConfig::default());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.fplm");
        m.save(&path).unwrap();
        rewrite(&path, |v| v["lambda"] = serde_json::json!(0.5));
        assert!(matches!(NgramModel::load(&path), Err(Error::CorruptFile(_))));
        m.save(&path).unwrap();
        rewrite(&path, |v| v["version"] = serde_json::json!(2));
        assert!(matches!(
            NgramModel::load(&path),
            Err(Error::VersionMismatch { expected: 1, found: 2 })
        ));
    }
}
