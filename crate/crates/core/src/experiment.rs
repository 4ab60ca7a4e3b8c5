//! Desk-scale generator/discriminator size study.
//!
//! Generators and discriminators are n-gram models of two sizes each
//! (size = order), all trained on the same training split. For every held-out
//! natural sample the first `prompt_length` tokens prompt each generator,
//! which continues with top-k sampling up to the natural sample's length.
//! Each discriminator scores both continuations (conditioned on the shared
//! prompt) and the synthetic/natural pairs are compared with the paired
//! sign-flip test.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fp::{score_continuation, FpSummary};
use crate::ngram::{NgramConfig, NgramModel, TopK, MAX_ORDER};
use crate::report::{emit_fp_table, emit_jsonl, FpCell};
use crate::scorer::{NgramScorer, Scorer};
use crate::stats::{paired_compare, render_csv, render_text, summary_table, PairedComparison, Trial};
use crate::tokenizer::{read_corpus, tokenize, Vocabulary};
use crate::types::{SampleScore, ScorerInfo};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizePair {
    pub small: usize,
    pub large: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub corpus: PathBuf,
    pub train_fraction: f64,
    pub generator_orders: SizePair,
    pub discriminator_orders: SizePair,
    pub top_k: usize,
    pub samples_per_arm: usize,
    pub sample_length: usize,
    pub prompt_length: usize,
    pub min_count: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            corpus: PathBuf::new(),
            train_fraction: 0.9,
            generator_orders: SizePair { small: 2, large: 4 },
            discriminator_orders: SizePair { small: 2, large: 5 },
            top_k: 5,
            samples_per_arm: 300,
            sample_length: 30,
            prompt_length: 5,
            min_count: 2,
            lambda: 0.75,
            alpha: 1.0,
            seed: 2020,
        }
    }
}

impl StudyConfig {
    /// Reads a TOML config; a relative `corpus` is resolved against the
    /// config file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: StudyConfig = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.corpus.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.corpus = dir.join(&cfg.corpus);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let orders = [
            self.generator_orders.small,
            self.generator_orders.large,
            self.discriminator_orders.small,
            self.discriminator_orders.large,
        ];
        if orders.iter().any(|o| !(1..=MAX_ORDER).contains(o)) {
            return Err(Error::Config(format!("orders must lie in [1, {MAX_ORDER}]")));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config("train_fraction must lie in (0, 1)".into()));
        }
        if self.samples_per_arm < 2 {
            return Err(Error::Config("samples_per_arm must be >= 2".into()));
        }
        if self.top_k == 0 {
            return Err(Error::Config("top_k must be >= 1".into()));
        }
        if self.prompt_length >= self.sample_length {
            return Err(Error::Config("prompt_length must be shorter than sample_length".into()));
        }
        NgramConfig {
            order: 1,
            lambda: self.lambda,
            alpha: self.alpha,
        }
        .validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyCell {
    pub generator: String,
    pub discriminator: String,
    pub backend: ScorerInfo,
    pub synthetic: FpSummary,
    pub natural: FpSummary,
    pub comparison: PairedComparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub hypothesis: String,
    pub statement: String,
    /// Per level of the varied factor: (label, significant cells, cells).
    pub breakdown: Vec<(String, usize, usize)>,
    pub rejected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub n_train: usize,
    pub n_heldout: usize,
    pub vocab_size: usize,
    pub heldout_unk_rate: f64,
    pub cells: Vec<StudyCell>,
    pub verdicts: Vec<Verdict>,
    /// Informational cross-size comparisons of mean differences.
    pub trends: Vec<String>,
    #[serde(skip)]
    pub natural_scores: BTreeMap<String, Vec<SampleScore>>,
    #[serde(skip)]
    pub synthetic_scores: BTreeMap<(String, String), Vec<SampleScore>>,
}

/// SplitMix64-style mixing of a base seed with coordinates.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut x = base;
    for &p in parts {
        x ^= p
            .wrapping_add(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(x << 6)
            .wrapping_add(x >> 2);
        x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
        x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        x ^= x >> 31;
    }
    x
}

struct Arm {
    label: String,
    order: usize,
}

fn arms(prefix: &str, sizes: SizePair) -> [Arm; 2] {
    [
        Arm {
            label: format!("{prefix}-small (ngram-{})", sizes.small),
            order: sizes.small,
        },
        Arm {
            label: format!("{prefix}-large (ngram-{})", sizes.large),
            order: sizes.large,
        },
    ]
}

/// Runs the study on `workers` threads (all cores when `None`).
/// The result does not depend on the worker count.
pub fn run_size_study(config: &StudyConfig, workers: Option<usize>) -> Result<StudyResult> {
    config.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_in_pool(config))
}

fn run_in_pool(config: &StudyConfig) -> Result<StudyResult> {
    let lines = read_corpus(&config.corpus)?;
    let mut samples: Vec<Vec<String>> = lines.iter().map(|l| tokenize(l)).filter(|t| !t.is_empty()).collect();
    if samples.len() < 2 {
        return Err(Error::CorpusTooSmall(format!("{} samples", samples.len())));
    }
    samples.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let n_train = ((samples.len() as f64 * config.train_fraction).round() as usize).clamp(1, samples.len() - 1);
    let heldout_all = samples.split_off(n_train);
    let train = samples;

    let vocab = Vocabulary::build(&train, config.min_count)?;
    if vocab.len() < 3 {
        return Err(Error::DegenerateVocabulary(format!("only {} entries", vocab.len())));
    }
    if config.top_k >= vocab.len() {
        return Err(Error::DegenerateVocabulary(format!(
            "top_k {} needs more than {} vocabulary entries",
            config.top_k,
            vocab.len()
        )));
    }
    let heldout: Vec<(usize, Vec<String>)> = heldout_all
        .iter()
        .enumerate()
        .filter(|(_, t)| t.len() >= config.sample_length)
        .take(config.samples_per_arm)
        .map(|(i, t)| (i, t[..config.sample_length].to_vec()))
        .collect();
    if heldout.len() < config.samples_per_arm {
        return Err(Error::CorpusTooSmall(format!(
            "{} held-out samples with >= {} tokens, {} required",
            heldout.len(),
            config.sample_length,
            config.samples_per_arm
        )));
    }
    let heldout_unk_rate = vocab.unk_rate(&heldout.iter().map(|(_, t)| t.clone()).collect::<Vec<_>>());
    info!(
        "split: {} train, {} held-out ({} used), |V|={}, held-out UNK rate {:.4}",
        train.len(),
        heldout_all.len(),
        heldout.len(),
        vocab.len(),
        heldout_unk_rate
    );

    let generators = arms("G", config.generator_orders);
    let discriminators = arms("D", config.discriminator_orders);
    let mut orders: Vec<usize> = generators.iter().chain(&discriminators).map(|a| a.order).collect();
    orders.sort_unstable();
    orders.dedup();
    let encoded: Vec<Vec<u32>> = train.iter().map(|t| vocab.encode(t)).collect();
    let models: BTreeMap<usize, Arc<NgramModel>> = orders
        .par_iter()
        .map(|&order| {
            let cfg = NgramConfig {
                order,
                lambda: config.lambda,
                alpha: config.alpha,
            };
            NgramModel::train(&encoded, vocab.clone(), cfg).map(|m| (order, Arc::new(m)))
        })
        .collect::<Result<_>>()?;

    let prompt_len = config.prompt_length;
    let continuation = config.sample_length - prompt_len;
    let opts = TopK {
        k: config.top_k,
        max_len: continuation,
        min_len: continuation,
    };
    let mut synthetic_texts: Vec<Vec<Vec<String>>> = Vec::new();
    for (g, arm) in generators.iter().enumerate() {
        let model = &models[&arm.order];
        let texts = heldout
            .par_iter()
            .map(|(idx, natural)| {
                let prompt = &natural[..prompt_len];
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[1, g as u64, *idx as u64]));
                let ids = model.generate(&mut rng, &opts, &vocab.encode(prompt))?;
                let mut text = prompt.to_vec();
                text.extend(vocab.decode(&ids));
                Ok(text)
            })
            .collect::<Result<Vec<_>>>()?;
        synthetic_texts.push(texts);
    }

    let score_all = |scorer: &NgramScorer, texts: &[Vec<String>], prefix: &str| -> Result<Vec<SampleScore>> {
        texts
            .par_iter()
            .zip(heldout.par_iter())
            .map(|(text, (idx, _))| score_continuation(scorer, text, prompt_len, &format!("{prefix}-{idx}")))
            .collect()
    };

    let natural_texts: Vec<Vec<String>> = heldout.iter().map(|(_, t)| t.clone()).collect();
    let mut cells = Vec::new();
    let mut natural_scores = BTreeMap::new();
    let mut synthetic_scores = BTreeMap::new();
    for (d, disc) in discriminators.iter().enumerate() {
        let scorer = NgramScorer::from_shared(Arc::clone(&models[&disc.order]));
        let backend = scorer.info()?;
        let natural = score_all(&scorer, &natural_texts, "natural")?;
        let natural_fps: Vec<f64> = natural.iter().map(|s| s.fp_s).collect();
        let natural_summary = FpSummary::from_values(&natural_fps)?;
        for (g, generator) in generators.iter().enumerate() {
            let synthetic = score_all(&scorer, &synthetic_texts[g], &format!("synthetic-g{g}"))?;
            let synthetic_fps: Vec<f64> = synthetic.iter().map(|s| s.fp_s).collect();
            let comparison = paired_compare(
                &synthetic_fps,
                &natural_fps,
                derive_seed(config.seed, &[2, g as u64, d as u64]),
            )?;
            info!(
                "{} x {}: mean diff {:.4}, exceedance {:.4}, p {:.5}",
                generator.label, disc.label, comparison.mean_diff, comparison.frac_greater, comparison.p_value
            );
            cells.push(StudyCell {
                generator: generator.label.clone(),
                discriminator: disc.label.clone(),
                backend: backend.clone(),
                synthetic: FpSummary::from_values(&synthetic_fps)?,
                natural: natural_summary,
                comparison,
            });
            synthetic_scores.insert((generator.label.clone(), disc.label.clone()), synthetic);
        }
        natural_scores.insert(disc.label.clone(), natural);
    }

    let verdicts = vec![
        verdict(
            "H1_0",
            "no significant difference between generated and reference Fp, for small and large generators",
            &cells,
            |c| c.generator.as_str(),
        ),
        verdict(
            "H2_0",
            "no significant difference between generated and reference Fp, for small and large discriminators",
            &cells,
            |c| c.discriminator.as_str(),
        ),
    ];
    let trends = trends(&cells, &generators, &discriminators);
    Ok(StudyResult {
        n_train: train.len(),
        n_heldout: heldout_all.len(),
        vocab_size: vocab.len(),
        heldout_unk_rate,
        cells,
        verdicts,
        trends,
        natural_scores,
        synthetic_scores,
    })
}

/// Rejected when the difference is significant in every cell of every level
/// of the varied factor.
fn verdict(name: &str, statement: &str, cells: &[StudyCell], level: impl Fn(&StudyCell) -> &str) -> Verdict {
    let mut breakdown: Vec<(String, usize, usize)> = Vec::new();
    for c in cells {
        let label = level(c);
        let idx = match breakdown.iter().position(|b| b.0 == label) {
            Some(i) => i,
            None => {
                breakdown.push((label.to_owned(), 0, 0));
                breakdown.len() - 1
            }
        };
        breakdown[idx].2 += 1;
        if c.comparison.significant {
            breakdown[idx].1 += 1;
        }
    }
    let rejected = breakdown.iter().all(|(_, sig, total)| sig == total);
    Verdict {
        hypothesis: name.into(),
        statement: statement.into(),
        breakdown,
        rejected,
    }
}

fn trends(cells: &[StudyCell], generators: &[Arm; 2], discriminators: &[Arm; 2]) -> Vec<String> {
    let diff = |g: &str, d: &str| {
        cells
            .iter()
            .find(|c| c.generator == g && c.discriminator == d)
            .map(|c| c.comparison.mean_diff)
            .unwrap_or(f64::NAN)
    };
    let mut out = Vec::new();
    for g in generators {
        let (s, l) = (
            diff(&g.label, &discriminators[0].label),
            diff(&g.label, &discriminators[1].label),
        );
        out.push(format!(
            "{}: mean diff {:.4} with small discriminator, {:.4} with large ({})",
            g.label,
            s,
            l,
            if l > s {
                "larger discriminator -> larger difference"
            } else {
                "no increase with discriminator size"
            }
        ));
    }
    for d in discriminators {
        let (s, l) = (
            diff(&generators[0].label, &d.label),
            diff(&generators[1].label, &d.label),
        );
        out.push(format!(
            "{}: mean diff {:.4} for small generator, {:.4} for large ({})",
            d.label,
            s,
            l,
            if l > s {
                "larger generator -> larger difference"
            } else {
                "no increase with generator size"
            }
        ));
    }
    out
}

impl StudyResult {
    pub fn fp_grid(&self) -> Vec<FpCell> {
        self.cells
            .iter()
            .map(|c| FpCell {
                generator: c.generator.clone(),
                discriminator: c.discriminator.clone(),
                backend: c.backend.clone(),
                generated: c.synthetic,
                gold: c.natural,
            })
            .collect()
    }

    pub fn trials(&self) -> Vec<Trial> {
        self.cells
            .iter()
            .map(|c| Trial {
                generator: c.generator.clone(),
                discriminator: c.discriminator.clone(),
                comparison: c.comparison,
            })
            .collect()
    }

    pub fn verdict_text(&self) -> String {
        let mut out = String::new();
        for v in &self.verdicts {
            out.push_str(&format!(
                "{} ({}): {}\n",
                v.hypothesis,
                v.statement,
                if v.rejected {
                    "REJECTED at p < 0.05"
                } else {
                    "not rejected"
                }
            ));
            for (label, sig, total) in &v.breakdown {
                out.push_str(&format!("  {label}: significant in {sig}/{total} cells\n"));
            }
        }
        out.push_str("trends (informational):\n");
        for t in &self.trends {
            out.push_str(&format!("  {t}\n"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in self.cells.iter().filter(|c| seen.insert(c.discriminator.clone())) {
            out.push_str(&format!(
                "backend {} = {} fingerprint {}\n",
                c.discriminator, c.backend.backend_name, c.backend.model_fingerprint
            ));
        }
        out
    }

    /// Writes the study tables, verdicts and per-sample records into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, text: String| {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| Error::io(path, e))
        };
        emit_fp_table(&self.fp_grid(), &dir.join("fp_table.csv"))?;
        let rows = summary_table(&self.trials());
        write("comparison.csv", render_csv(&rows)?)?;
        write("comparison.txt", render_text(&rows))?;
        write("verdicts.txt", self.verdict_text())?;
        write("study.json", serde_json::to_string_pretty(self)? + "\n")?;
        for (d, (label, scores)) in self.natural_scores.iter().enumerate() {
            log::debug!("writing natural scores for {label}");
            emit_jsonl(scores, &dir.join(format!("natural_d{d}.jsonl")))?;
        }
        for (i, scores) in self.synthetic_scores.values().enumerate() {
            emit_jsonl(scores, &dir.join(format!("synthetic_cell{i}.jsonl")))?;
        }
        Ok(())
    }
}
