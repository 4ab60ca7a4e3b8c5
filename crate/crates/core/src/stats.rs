//! Paired comparison of generated vs. reference fractions with a sign-flip
//! permutation test.
//!
//! For paired differences `d_i = gen_i - gold_i` the null hypothesis is that
//! each `d_i` is symmetric around zero. The two-sided p-value is the share of
//! sign assignments whose mean is at least as extreme as the observed one:
//! all `2^n` assignments when `n <= 20`, otherwise 20 000 seeded random
//! assignments with add-one smoothing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EXACT_MAX_N: usize = 20;
pub const MONTE_CARLO_RESAMPLES: usize = 20_000;
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;
/// Resamples per independently seeded Monte Carlo block.
const BLOCK: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum TestMethod {
    Exact { assignments: u64 },
    MonteCarlo { seed: u64, resamples: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestMeta {
    #[serde(flatten)]
    pub method: TestMethod,
    /// Pairs with `gen == gold`; counted on neither side of `frac_greater`.
    pub n_ties: usize,
    pub n_less: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub n_pairs: usize,
    pub frac_greater: f64,
    pub mean_diff: f64,
    /// `mean_diff / mean(gold)` in percent.
    pub rel_diff_pct: f64,
    pub p_value: f64,
    pub significant: bool,
    pub test_meta: TestMeta,
}

pub fn paired_compare(gen_fps: &[f64], gold_fps: &[f64], seed: u64) -> Result<PairedComparison> {
    if gen_fps.len() != gold_fps.len() {
        return Err(Error::LengthMismatch {
            left: gen_fps.len(),
            right: gold_fps.len(),
        });
    }
    let n = gen_fps.len();
    if n < 2 {
        return Err(Error::EmptyInput("paired comparison needs at least 2 pairs"));
    }
    let diffs: Vec<f64> = gen_fps.iter().zip(gold_fps).map(|(g, r)| g - r).collect();
    let greater = diffs.iter().filter(|&&d| d > 0.0).count();
    let n_less = diffs.iter().filter(|&&d| d < 0.0).count();
    let mean_diff = diffs.iter().sum::<f64>() / n as f64;
    let gold_mean = gold_fps.iter().sum::<f64>() / n as f64;
    let (p_value, method) = sign_flip_test(&diffs, seed);
    Ok(PairedComparison {
        n_pairs: n,
        frac_greater: greater as f64 / n as f64,
        mean_diff,
        rel_diff_pct: 100.0 * mean_diff / gold_mean,
        p_value,
        significant: p_value < SIGNIFICANCE_LEVEL,
        test_meta: TestMeta {
            method,
            n_ties: n - greater - n_less,
            n_less,
        },
    })
}

/// Two-sided sign-flip p-value for the mean of `diffs`.
pub fn sign_flip_test(diffs: &[f64], seed: u64) -> (f64, TestMethod) {
    let observed: f64 = diffs.iter().sum();
    // Sums of the same magnitudes in a different order may differ by rounding.
    let tol = 1e-12 * diffs.iter().map(|d| d.abs()).sum::<f64>();
    let cutoff = observed.abs() - tol;
    if diffs.len() <= EXACT_MAX_N {
        let total = 1u64 << diffs.len();
        let hits: u64 = (0..total)
            .into_par_iter()
            .filter(|&mask| flipped_sum(diffs, |i| mask >> i & 1 == 1).abs() >= cutoff)
            .count() as u64;
        (hits as f64 / total as f64, TestMethod::Exact { assignments: total })
    } else {
        let blocks = MONTE_CARLO_RESAMPLES.div_ceil(BLOCK);
        let hits: usize = (0..blocks)
            .into_par_iter()
            .map(|b| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(b as u64);
                let len = BLOCK.min(MONTE_CARLO_RESAMPLES - b * BLOCK);
                (0..len)
                    .filter(|_| {
                        let signs: Vec<bool> = (0..diffs.len()).map(|_| rng.gen()).collect();
                        flipped_sum(diffs, |i| signs[i]).abs() >= cutoff
                    })
                    .count()
            })
            .sum();
        (
            (hits + 1) as f64 / (MONTE_CARLO_RESAMPLES + 1) as f64,
            TestMethod::MonteCarlo {
                seed,
                resamples: MONTE_CARLO_RESAMPLES,
            },
        )
    }
}

fn flipped_sum(diffs: &[f64], flip: impl Fn(usize) -> bool) -> f64 {
    diffs
        .iter()
        .enumerate()
        .map(|(i, &d)| if flip(i) { -d } else { d })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub generator: String,
    pub discriminator: String,
    pub comparison: PairedComparison,
}

/// One rendered cell of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub generator: String,
    pub discriminator: String,
    pub n_pairs: usize,
    /// e.g. `72.64 %`
    pub exceedance: String,
    /// e.g. `0.08†(29.46 %)`; the dagger marks p < 0.05.
    pub difference: String,
    pub p_value: f64,
}

pub const DAGGER: char = '\u{2020}';

/// Percent with two decimals: `0.7264` -> `72.64 %`.
pub fn format_percent(fraction: f64) -> String {
    format!("{:.2} %", 100.0 * fraction)
}

/// Three decimals without trailing zeros, then the dagger if significant,
/// then the relative difference.
pub fn format_difference(mean_diff: f64, rel_diff_pct: f64, significant: bool) -> String {
    let mut value = format!("{mean_diff:.3}");
    while value.ends_with('0') {
        value.pop();
    }
    if value.ends_with('.') {
        value.push('0');
    }
    if value == "-0.0" {
        value = "0.0".into();
    }
    let marker = if significant {
        DAGGER.to_string()
    } else {
        " ".to_string()
    };
    format!("{value}{marker}({rel_diff_pct:.2} %)")
}

pub fn summary_table(trials: &[Trial]) -> Vec<SummaryRow> {
    trials
        .iter()
        .map(|t| SummaryRow {
            generator: t.generator.clone(),
            discriminator: t.discriminator.clone(),
            n_pairs: t.comparison.n_pairs,
            exceedance: format_percent(t.comparison.frac_greater),
            difference: format_difference(
                t.comparison.mean_diff,
                t.comparison.rel_diff_pct,
                t.comparison.significant,
            ),
            p_value: t.comparison.p_value,
        })
        .collect()
}

const HEADER: [&str; 6] = [
    "generator",
    "discriminator",
    "n_pairs",
    "fp_gen>fp_gold",
    "fp_gen-fp_gold",
    "p_value",
];

fn cells(row: &SummaryRow) -> [String; 6] {
    [
        row.generator.clone(),
        row.discriminator.clone(),
        row.n_pairs.to_string(),
        row.exceedance.clone(),
        row.difference.clone(),
        format!("{:.6}", row.p_value),
    ]
}

pub fn render_csv(rows: &[SummaryRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Config(format!("csv: {e}"));
    w.write_record(HEADER).map_err(io)?;
    for row in rows {
        w.write_record(cells(row)).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Space-aligned plain-text rendering of the same rows.
pub fn render_text(rows: &[SummaryRow]) -> String {
    let table: Vec<[String; 6]> = std::iter::once(HEADER.map(str::to_owned))
        .chain(rows.iter().map(cells))
        .collect();
    let widths: Vec<usize> = (0..6)
        .map(|c| table.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in &table {
        let line: Vec<String> = r
            .iter()
            .zip(&widths)
            .map(|(cell, &w)| format!("{cell}{}", " ".repeat(w - cell.chars().count())))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}
